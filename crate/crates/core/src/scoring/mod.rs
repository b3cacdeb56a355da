//! Scorers that turn sentences into [`ScoreTables`], with parameter gradients.

pub mod autodiff;
pub mod container;
pub mod loglinear;
pub mod neural;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chart::{LabelTable, Order, ScoreTables};
use crate::types::{RoleInventory, Sentence};
use container::{Container, ContainerError, NamedTensor};
pub use loglinear::FeatureScorerParams;
pub use neural::{NeuralConfig, ScorerParams, Vocab};

/// Gradient of a scalar with respect to every entry of a [`ScoreTables`].
///
/// `root[j] = [PRD, NULL]`; `labels` is laid out like the label table.
#[derive(Clone, Debug, PartialEq)]
pub struct TableGrads {
    pub n: usize,
    pub arc: Vec<f64>,
    pub sib: Option<Vec<f64>>,
    pub root: Vec<[f64; 2]>,
    pub labels: Vec<f64>,
}

impl TableGrads {
    pub fn zeros(n: usize, roles: &RoleInventory, order: Order) -> Self {
        let dim = n + 1;
        TableGrads {
            n,
            arc: vec![0.0; dim * dim],
            sib: (order == Order::Second).then(|| vec![0.0; dim * dim * dim]),
            root: vec![[0.0; 2]; dim],
            labels: vec![0.0; dim * dim * LabelTable::arc_label_count(roles)],
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    #[default]
    LogLinear,
    Neural,
}

impl ScorerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScorerKind::LogLinear => "loglinear",
            ScorerKind::Neural => "neural",
        }
    }
}

impl fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScorerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "loglinear" | "log-linear" | "features" => Ok(ScorerKind::LogLinear),
            "neural" | "biaffine" => Ok(ScorerKind::Neural),
            _ => Err(format!(
                "unknown scorer {s:?} (expected loglinear or neural)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Scorer {
    LogLinear(FeatureScorerParams),
    Neural(ScorerParams),
}

/// Result of a forward pass, retained for the backward pass.
pub struct Forward {
    pub tables: ScoreTables,
    cache: Cache,
}

enum Cache {
    LogLinear(loglinear::SentenceFeatures),
    Neural(neural::NeuralTape),
}

/// Parameter gradient of one sentence.
#[derive(Clone, Debug, PartialEq)]
pub enum ParamGrad {
    Dense(Vec<f64>),
    Sparse(Vec<(u32, f64)>),
}

impl ParamGrad {
    /// `out += scale * self`.
    pub fn add_to(&self, out: &mut [f64], scale: f64) {
        match self {
            ParamGrad::Dense(g) => out.iter_mut().zip(g).for_each(|(o, v)| *o += scale * v),
            ParamGrad::Sparse(g) => g.iter().for_each(|&(i, v)| out[i as usize] += scale * v),
        }
    }

    pub fn to_dense(&self, len: usize) -> Vec<f64> {
        let mut out = vec![0.0; len];
        self.add_to(&mut out, 1.0);
        out
    }
}

impl Scorer {
    pub fn kind(&self) -> ScorerKind {
        match self {
            Scorer::LogLinear(_) => ScorerKind::LogLinear,
            Scorer::Neural(_) => ScorerKind::Neural,
        }
    }

    pub fn roles(&self) -> &Arc<RoleInventory> {
        match self {
            Scorer::LogLinear(p) => p.roles(),
            Scorer::Neural(p) => p.roles(),
        }
    }

    pub fn params(&self) -> &[f64] {
        match self {
            Scorer::LogLinear(p) => p.weights(),
            Scorer::Neural(p) => p.values(),
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match self {
            Scorer::LogLinear(p) => p.weights_mut(),
            Scorer::Neural(p) => p.values_mut(),
        }
    }

    /// Arc and label scores, plus sibling scores for `Order::Second`.
    pub fn score(&self, sentence: &Sentence, order: Order) -> ScoreTables {
        match self {
            Scorer::LogLinear(p) => p.score(sentence, order),
            Scorer::Neural(p) => p.score(sentence, order),
        }
    }

    pub fn forward(&self, sentence: &Sentence, order: Order) -> Forward {
        match self {
            Scorer::LogLinear(p) => {
                let feats = p.features(sentence, order);
                Forward {
                    tables: p.tables(&feats),
                    cache: Cache::LogLinear(feats),
                }
            }
            Scorer::Neural(p) => {
                let tape = p.forward(sentence, order);
                Forward {
                    tables: p.tables(&tape, sentence.len()),
                    cache: Cache::Neural(tape),
                }
            }
        }
    }

    pub fn backward(&self, forward: &Forward, grads: &TableGrads) -> ParamGrad {
        match (self, &forward.cache) {
            (Scorer::LogLinear(p), Cache::LogLinear(feats)) => {
                ParamGrad::Sparse(p.backward(feats, &forward.tables, grads))
            }
            (Scorer::Neural(p), Cache::Neural(tape)) => ParamGrad::Dense(p.backward(tape, grads)),
            _ => panic!("forward pass came from a different scorer"),
        }
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error("model metadata: {0}")]
    Metadata(String),
}

#[derive(Debug, Serialize, Deserialize)]
struct Metadata {
    scorer: ScorerKind,
    seed: u64,
    roles: RoleInventory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bits: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vocab: Option<Vocab>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    neural: Option<NeuralConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    checkpoint: Option<serde_json::Value>,
}

/// A scorer with the seed it was initialized from and optional training
/// metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub scorer: Scorer,
    pub seed: u64,
    pub checkpoint: Option<serde_json::Value>,
}

impl Model {
    pub fn new(scorer: Scorer, seed: u64) -> Self {
        Model {
            scorer,
            seed,
            checkpoint: None,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut meta = Metadata {
            scorer: self.scorer.kind(),
            seed: self.seed,
            roles: (**self.scorer.roles()).clone(),
            bits: None,
            vocab: None,
            neural: None,
            checkpoint: self.checkpoint.clone(),
        };
        let tensors = match &self.scorer {
            Scorer::LogLinear(p) => {
                meta.bits = Some(p.bits());
                vec![NamedTensor {
                    name: "weights".into(),
                    shape: vec![p.weights().len()],
                    data: p.weights().to_vec(),
                }]
            }
            Scorer::Neural(p) => {
                meta.vocab = Some(p.vocab.clone());
                meta.neural = Some(p.config);
                p.tensors()
                    .map(|(name, shape, data)| NamedTensor {
                        name: name.into(),
                        shape: shape.to_vec(),
                        data: data.to_vec(),
                    })
                    .collect()
            }
        };
        Container {
            metadata: serde_json::to_value(&meta).expect("metadata serializes"),
            tensors,
        }
        .to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let container = Container::from_bytes(bytes)?;
        let meta: Metadata = serde_json::from_value(container.metadata.clone())
            .map_err(|e| ModelError::Metadata(e.to_string()))?;
        let roles = Arc::new(meta.roles);
        let missing = |what: &str| ModelError::Metadata(format!("missing {what}"));
        let scorer = match meta.scorer {
            ScorerKind::LogLinear => {
                let bits = meta.bits.ok_or_else(|| missing("bits"))?;
                let w = container
                    .tensor("weights")
                    .ok_or_else(|| missing("weights tensor"))?;
                Scorer::LogLinear(
                    FeatureScorerParams::from_weights(bits, roles, w.data.clone())
                        .map_err(ModelError::Metadata)?,
                )
            }
            ScorerKind::Neural => {
                let config = meta.neural.ok_or_else(|| missing("neural config"))?;
                let vocab = meta.vocab.ok_or_else(|| missing("vocab"))?;
                let dims = [
                    config.embed_dim,
                    config.hidden_dim,
                    config.arc_dim,
                    config.label_dim,
                    config.sib_dim,
                ];
                if dims.iter().any(|&d| d == 0 || d > 4096) {
                    return Err(ModelError::Metadata(format!("bad dimensions {config:?}")));
                }
                let mut params = ScorerParams::zeros(config, vocab, roles);
                let names: Vec<String> = params.tensor_names().map(String::from).collect();
                if names.len() != container.tensors.len() {
                    return Err(ModelError::Metadata(format!(
                        "{} tensors, expected {}",
                        container.tensors.len(),
                        names.len()
                    )));
                }
                for name in names {
                    let t = container.tensor(&name).ok_or_else(|| missing(&name))?;
                    params
                        .set_tensor(&name, &t.shape, &t.data)
                        .map_err(ModelError::Metadata)?;
                }
                Scorer::Neural(params)
            }
        };
        if scorer.params().iter().any(|v| !v.is_finite()) {
            return Err(ModelError::Metadata("non-finite parameter".into()));
        }
        Ok(Model {
            scorer,
            seed: meta.seed,
            checkpoint: meta.checkpoint,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roles() -> Arc<RoleInventory> {
        Arc::new(RoleInventory::new(["A0", "A1"]).unwrap())
    }

    #[test]
    fn models_round_trip() {
        let s = Sentence::from_text("a b c").unwrap();
        let small = NeuralConfig {
            embed_dim: 2,
            hidden_dim: 3,
            arc_dim: 2,
            label_dim: 2,
            sib_dim: 2,
        };
        let models = [
            Model::new(
                Scorer::LogLinear(FeatureScorerParams::new(8, roles(), 1)),
                1,
            ),
            Model {
                scorer: Scorer::Neural(ScorerParams::new(
                    small,
                    Vocab::from_sentences([&s]),
                    roles(),
                    2,
                )),
                seed: 2,
                checkpoint: Some(serde_json::json!({"epoch": 3})),
            },
        ];
        for model in models {
            let bytes = model.to_bytes();
            let back = Model::from_bytes(&bytes).unwrap();
            assert_eq!(back, model);
            assert_eq!(back.to_bytes(), bytes);
            assert_eq!(
                back.scorer.score(&s, Order::Second),
                model.scorer.score(&s, Order::Second)
            );
        }
    }

    #[test]
    fn scorer_kind_parses() {
        assert_eq!(
            "loglinear".parse::<ScorerKind>().unwrap(),
            ScorerKind::LogLinear
        );
        assert_eq!("Neural".parse::<ScorerKind>().unwrap(), ScorerKind::Neural);
        assert!("crf".parse::<ScorerKind>().is_err());
    }
}
