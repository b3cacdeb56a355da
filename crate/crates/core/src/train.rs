//! The span-constrained TreeCRF objective and the training loop.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chart::{inside, inside_constrained, marginals, ChartError, Order, ScoreTables};
use crate::convert::{ForestConstraints, Variant};
use crate::data::{evaluate, DataError, EvalReport};
use crate::decode::{parse, DecodeConfig, DecodeError, PredicateMode};
use crate::scoring::{
    FeatureScorerParams, Model, NeuralConfig, Scorer, ScorerKind, ScorerParams, TableGrads, Vocab,
};
use crate::types::{FrameError, PredicateFrame, RoleInventory, Sentence, SrlAnnotation};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Chart(#[from] ChartError),

    #[error(transparent)]
    Frame(#[from] FrameError),

    #[error(transparent)]
    Decode(#[from] DecodeError),

    #[error(transparent)]
    Data(#[from] DataError),

    #[error("non-finite loss {value} on training sentence {sentence} in epoch {epoch}")]
    NonFiniteLoss {
        epoch: usize,
        sentence: usize,
        value: f64,
    },

    #[error("invalid training configuration: {0}")]
    Config(String),
}

/// What the loss is computed over.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    pub order: Order,
    pub variant: Variant,
    /// Weight of the root-label cross-entropy; 0 disables it.
    pub aux_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            order: Order::First,
            variant: Variant::Latent,
            aux_weight: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub order: Order,
    pub variant: Variant,
    pub scorer: ScorerKind,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Non-improving epochs tolerated before stopping; 0 trains one epoch.
    pub patience: usize,
    pub seed: u64,
    pub aux_weight: f64,
    /// Sentences are grouped into batches of about this many tokens.
    pub batch_tokens: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub hash_bits: u32,
    pub neural: NeuralConfig,
    /// Stop after the first epoch that ends past this many seconds.
    pub max_seconds: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            order: Order::First,
            variant: Variant::Latent,
            scorer: ScorerKind::LogLinear,
            learning_rate: 0.02,
            epochs: 20,
            patience: 3,
            seed: 1,
            aux_weight: 1.0,
            batch_tokens: 200,
            beta1: 0.9,
            beta2: 0.9,
            epsilon: 1e-12,
            hash_bits: crate::scoring::loglinear::DEFAULT_BITS,
            neural: NeuralConfig::default(),
            max_seconds: None,
        }
    }
}

impl TrainConfig {
    pub fn loss(&self) -> LossConfig {
        LossConfig {
            order: self.order,
            variant: self.variant,
            aux_weight: self.aux_weight,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_owned()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.batch_tokens == 0 {
            return bad("batch token budget must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("moment decay rates must be in [0, 1)");
        }
        if !(self.aux_weight >= 0.0 && self.aux_weight.is_finite()) {
            return bad("auxiliary weight must be non-negative");
        }
        if !(1..=28).contains(&self.hash_bits) {
            return bad("hash bits must be in 1..=28");
        }
        Ok(())
    }

    /// Metadata record stored in checkpoints.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "order": self.order.as_u8(),
            "variant": self.variant.as_str(),
            "scorer": self.scorer.as_str(),
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "patience": self.patience,
            "seed": self.seed,
            "aux_weight": self.aux_weight,
            "batch_tokens": self.batch_tokens,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "epsilon": self.epsilon,
            "hash_bits": self.hash_bits,
            "neural": self.neural,
        })
    }
}

/// `-log P(T_p | x)`: log partition minus the log numerator over the forest,
/// with label log-probabilities of arcs out of 0 and `p` folded in.
pub fn frame_loss(
    sentence: &Sentence,
    frame: &PredicateFrame,
    scores: &ScoreTables,
    order: Order,
    variant: Variant,
) -> Result<f64, TrainError> {
    let c = ForestConstraints::new(sentence, frame, variant)?;
    Ok(inside(scores, order, None)? - inside_constrained(scores, order, &c)?)
}

/// Sum of frame losses plus the weighted root-label cross-entropy.
pub fn sentence_loss(
    annotation: &SrlAnnotation,
    scores: &ScoreTables,
    config: &LossConfig,
) -> Result<f64, TrainError> {
    Ok(sentence_loss_grad(annotation, scores, config)?.0)
}

/// Sentence loss and its gradient with respect to every table entry.
pub fn sentence_loss_grad(
    annotation: &SrlAnnotation,
    scores: &ScoreTables,
    config: &LossConfig,
) -> Result<(f64, TableGrads), TrainError> {
    let sentence = &annotation.sentence;
    let n = sentence.len();
    let dim = n + 1;
    let empty = RoleInventory::default();
    let roles = scores.labels().map_or(&empty, |l| l.roles().as_ref());
    let k = roles.len() + 1;
    let mut grads = TableGrads::zeros(n, roles, config.order);
    let mut loss = 0.0;
    if !annotation.frames().is_empty() {
        let full = marginals(scores, config.order, None)?;
        for frame in annotation.frames() {
            let c = ForestConstraints::new(sentence, frame, config.variant)?;
            let constrained = marginals(scores, config.order, Some(&c))?;
            loss += full.log_z - constrained.log_z;
            for (g, (a, b)) in grads
                .arc
                .iter_mut()
                .zip(full.arc_marginals().iter().zip(constrained.arc_marginals()))
            {
                *g += a - b;
            }
            if let (Some(g), Some(a), Some(b)) = (
                grads.sib.as_mut(),
                full.sib_marginals(),
                constrained.sib_marginals(),
            ) {
                g.iter_mut()
                    .zip(a.iter().zip(b))
                    .for_each(|(g, (a, b))| *g += a - b);
            }
            if let Some(labels) = scores.labels() {
                let p = frame.predicate;
                grads.root[p][0] -= constrained.arc_marginal(0, p);
                for m in (1..=n).filter(|&m| m != p) {
                    let mu = constrained.arc_marginal(p, m);
                    if mu != 0.0 {
                        let idx = labels.label_index(&c.gold_label(m))?;
                        grads.labels[(p * dim + m) * k + idx] -= mu;
                    }
                }
            }
        }
    }
    if config.aux_weight != 0.0 {
        if let Some(labels) = scores.labels() {
            for j in 1..=n {
                let target = if annotation.frame(j).is_some() { 0 } else { 1 };
                loss -= config.aux_weight * labels.root_row(j)[target];
                grads.root[j][target] -= config.aux_weight;
            }
        }
    }
    Ok((loss, grads))
}

/// Adaptive moment estimation over a flat parameter vector.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(len: usize, lr: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            epsilon,
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            if *g == 0.0 && *m == 0.0 && *v == 0.0 {
                continue;
            }
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.epsilon);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev: EvalReport,
    pub improved: bool,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the best dev epoch, with checkpoint metadata.
    pub model: Model,
    pub history: Vec<EpochMetrics>,
    pub best_epoch: usize,
}

/// Fresh scorer of the configured kind for a training corpus.
pub fn init_scorer(train: &[SrlAnnotation], config: &TrainConfig) -> Scorer {
    let roles = std::sync::Arc::new(RoleInventory::from_corpus(train));
    match config.scorer {
        ScorerKind::LogLinear => Scorer::LogLinear(FeatureScorerParams::new(
            config.hash_bits,
            roles,
            config.seed,
        )),
        ScorerKind::Neural => {
            let vocab = Vocab::from_sentences(train.iter().map(|a| &a.sentence));
            Scorer::Neural(ScorerParams::new(config.neural, vocab, roles, config.seed))
        }
    }
}

/// End-to-end parse of a corpus, in input order.
pub fn predict(
    scorer: &Scorer,
    corpus: &[SrlAnnotation],
    order: Order,
) -> Result<Vec<SrlAnnotation>, DecodeError> {
    let config = DecodeConfig {
        order,
        predicate_mode: PredicateMode::Predict,
        ..Default::default()
    };
    corpus
        .par_iter()
        .map(|a| parse(&a.sentence, &scorer.score(&a.sentence, order), &config))
        .collect()
}

fn batches(order: &[usize], corpus: &[SrlAnnotation], budget: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::new();
    let mut tokens = 0;
    for &i in order {
        current.push(i);
        tokens += corpus[i].sentence.len();
        if tokens >= budget {
            out.push(std::mem::take(&mut current));
            tokens = 0;
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

/// Train on `train`, selecting the epoch with the best end-to-end dev F1.
pub fn train(
    train: &[SrlAnnotation],
    dev: &[SrlAnnotation],
    config: &TrainConfig,
    mut progress: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if train.is_empty() || dev.is_empty() {
        return Err(TrainError::Config(
            "training and dev corpora must be non-empty".into(),
        ));
    }
    let started = Instant::now();
    let loss_config = config.loss();
    let mut scorer = init_scorer(train, config);
    let len = scorer.params().len();
    let mut adam = Adam::new(
        len,
        config.learning_rate,
        config.beta1,
        config.beta2,
        config.epsilon,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut grad = vec![0.0; len];
    let mut history: Vec<EpochMetrics> = Vec::new();
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    let mut since_best = 0;
    for epoch in 1..=config.epochs {
        let epoch_start = Instant::now();
        order.shuffle(&mut rng);
        let mut total_loss = 0.0;
        for batch in batches(&order, train, config.batch_tokens) {
            let results: Vec<Result<(f64, crate::scoring::ParamGrad), TrainError>> = batch
                .par_iter()
                .map(|&i| {
                    let forward = scorer.forward(&train[i].sentence, config.order);
                    let (loss, g) = sentence_loss_grad(&train[i], &forward.tables, &loss_config)?;
                    if !loss.is_finite() {
                        return Err(TrainError::NonFiniteLoss {
                            epoch,
                            sentence: i + 1,
                            value: loss,
                        });
                    }
                    Ok((loss, scorer.backward(&forward, &g)))
                })
                .collect();
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for r in results {
                let (loss, g) = r?;
                total_loss += loss;
                g.add_to(&mut grad, scale);
            }
            adam.update(scorer.params_mut(), &grad);
        }
        let predicted = predict(&scorer, dev, config.order)?;
        let report = evaluate(dev, &predicted)?;
        let improved = best.as_ref().is_none_or(|(f1, _, _)| report.f1 > *f1);
        if improved {
            best = Some((report.f1, epoch, scorer.params().to_vec()));
            since_best = 0;
        } else {
            since_best += 1;
        }
        let metrics = EpochMetrics {
            epoch,
            train_loss: total_loss / train.len() as f64,
            dev: report,
            improved,
            seconds: epoch_start.elapsed().as_secs_f64(),
        };
        progress(&metrics);
        history.push(metrics);
        if since_best >= config.patience {
            break;
        }
        if config
            .max_seconds
            .is_some_and(|limit| started.elapsed().as_secs_f64() > limit)
        {
            break;
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch ran");
    scorer.params_mut().copy_from_slice(&params);
    let dev_report = history[best_epoch - 1].dev;
    let checkpoint = serde_json::json!({
        "config": config.to_json(),
        "epoch": best_epoch,
        "epochs_run": history.len(),
        "dev_f1": dev_report.f1,
        "dev_cm": dev_report.cm,
    });
    Ok(TrainOutcome {
        model: Model {
            scorer,
            seed: config.seed,
            checkpoint: Some(checkpoint),
        },
        history,
        best_epoch,
    })
}
