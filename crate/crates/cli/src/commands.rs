use std::io::Write;
use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use latent_srl::chart::{
    inside, inside_constrained_with_fault, Fault, LabelTable, Order, ScoreTables,
};
use latent_srl::convert::{ForestConstraints, Variant};
use latent_srl::data::{
    attachment_agreement, evaluate, read_full_trees, read_tree_records, tree_record,
    write_full_trees, write_tree_records, FullTree,
};
use latent_srl::decode::{decode_full_tree, eisner_decode, parse, DecodeConfig, PredicateMode};
use latent_srl::oracle::{brute_best, brute_log_z, MAX_BRUTE};
use latent_srl::scoring::Model;
use latent_srl::synth::{synth_corpus, SynthConfig};
use latent_srl::train::{train, TrainConfig};
use latent_srl::types::{RoleInventory, SrlAnnotation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::ConfigFile;
use crate::io::{open_input, open_output, read_corpus, write_corpus, Format};
use crate::{
    CheckArgs, Cli, Command, ConvertArgs, Direction, EvaluateArgs, FaultArg, InduceArgs, ParseArgs,
    Predicates, SynthArgs, TrainArgs,
};

/// Exit status of a failed verification.
const VERIFICATION_FAILURE: u8 = 2;

pub fn run(cli: Cli) -> Result<ExitCode> {
    let file = ConfigFile::load(cli.config.as_deref())?;
    if let Some(threads) = file.resolve_opt(cli.threads, "threads")? {
        if threads == 0 {
            bail!("--threads must be positive");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("starting the worker pool")?;
    }
    match cli.command {
        Command::Convert(args) => convert(args, &file),
        Command::Train(args) => train_cmd(args, &file),
        Command::Parse(args) => parse_cmd(args, &file),
        Command::Evaluate(args) => evaluate_cmd(args, &file),
        Command::Induce(args) => induce(args, &file),
        Command::Check(args) => check(args, &file),
        Command::Synth(args) => synth(args, &file),
    }
}

fn format(flag: Option<Format>, file: &ConfigFile) -> Result<Format> {
    file.resolve(flag, "format", Format::Jsonl)
}

fn load_model(path: &Path) -> Result<Model> {
    let bytes = std::fs::read(path).with_context(|| format!("reading model {}", path.display()))?;
    Model::from_bytes(&bytes).with_context(|| format!("loading model {}", path.display()))
}

/// Order recorded in the checkpoint, else first order.
fn model_order(model: &Model) -> Order {
    model
        .checkpoint
        .as_ref()
        .and_then(|c| c["config"]["order"].as_u64())
        .map_or(Order::First, |o| {
            if o == 2 {
                Order::Second
            } else {
                Order::First
            }
        })
}

fn convert(args: ConvertArgs, file: &ConfigFile) -> Result<ExitCode> {
    let format = format(args.format, file)?;
    match args.direction {
        Direction::SrlToTrees => {
            let corpus = read_corpus(&args.input, format)?;
            let records = corpus
                .iter()
                .enumerate()
                .map(|(i, a)| tree_record(a).with_context(|| format!("sentence {}", i + 1)))
                .collect::<Result<Vec<_>>>()?;
            let mut out = open_output(&args.output)?;
            write_tree_records(&mut out, &records)?;
            out.flush()?;
        }
        Direction::TreesToSrl => {
            let records = read_tree_records(open_input(&args.input)?)
                .with_context(|| format!("reading {}", args.input.display()))?;
            let corpus = records
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    r.to_annotation()
                        .map_err(|e| anyhow::anyhow!("record {}: {e}", i + 1))
                })
                .collect::<Result<Vec<_>>>()?;
            write_corpus(&args.output, format, &corpus)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn train_cmd(args: TrainArgs, file: &ConfigFile) -> Result<ExitCode> {
    let format = format(args.format, file)?;
    let d = TrainConfig::default();
    let config = TrainConfig {
        order: file.resolve(args.order, "order", d.order)?,
        variant: file.resolve(args.variant, "variant", d.variant)?,
        scorer: file.resolve(args.scorer, "scorer", d.scorer)?,
        learning_rate: file.resolve(args.learning_rate, "learning-rate", d.learning_rate)?,
        epochs: file.resolve(args.epochs, "epochs", d.epochs)?,
        patience: file.resolve(args.patience, "patience", d.patience)?,
        seed: file.resolve(args.seed, "seed", d.seed)?,
        aux_weight: file.resolve(args.aux_weight, "aux-weight", d.aux_weight)?,
        batch_tokens: file.resolve(args.batch_tokens, "batch-tokens", d.batch_tokens)?,
        hash_bits: file.resolve(args.hash_bits, "hash-bits", d.hash_bits)?,
        max_seconds: file.resolve_opt(args.max_seconds, "max-seconds")?,
        ..d
    };
    config.validate()?;
    let train_corpus = read_corpus(&args.train, format)?;
    let dev = read_corpus(&args.dev, format)?;
    let outcome = train(&train_corpus, &dev, &config, |m| {
        eprintln!(
            "epoch {:>3}  loss {:.4}  dev f1 {:.2}  cm {:.2}  {:.1}s{}",
            m.epoch,
            m.train_loss,
            m.dev.f1,
            m.dev.cm,
            m.seconds,
            if m.improved { "  *" } else { "" }
        );
    })?;
    let best = &outcome.history[outcome.best_epoch - 1];
    eprintln!(
        "best epoch {}  dev f1 {:.2}  cm {:.2}",
        outcome.best_epoch, best.dev.f1, best.dev.cm
    );
    std::fs::write(&args.output, outcome.model.to_bytes())
        .with_context(|| format!("writing {}", args.output.display()))?;
    Ok(ExitCode::SUCCESS)
}

fn parse_cmd(args: ParseArgs, file: &ConfigFile) -> Result<ExitCode> {
    let format = format(args.format, file)?;
    let model = load_model(&args.model)?;
    let order = file.resolve(args.order, "order", model_order(&model))?;
    let predicates = file.resolve(args.predicates, "predicates", Predicates::Predict)?;
    let corpus = read_corpus(&args.input, format)?;
    let started = Instant::now();
    let parsed = corpus
        .par_iter()
        .enumerate()
        .map(|(i, a)| {
            let predicate_mode = match predicates {
                Predicates::Predict => PredicateMode::Predict,
                Predicates::Gold => PredicateMode::Gold(a.predicates()),
            };
            let config = DecodeConfig {
                order,
                predicate_mode,
                ..Default::default()
            };
            parse(
                &a.sentence,
                &model.scorer.score(&a.sentence, order),
                &config,
            )
            .with_context(|| format!("sentence {}", i + 1))
        })
        .collect::<Result<Vec<_>>>()?;
    let seconds = started.elapsed().as_secs_f64();
    eprintln!(
        "parsed {} sentences in {:.3}s ({:.1} sentences/s)",
        parsed.len(),
        seconds,
        parsed.len() as f64 / seconds.max(1e-9)
    );
    write_corpus(&args.output, format, &parsed)?;
    Ok(ExitCode::SUCCESS)
}

fn evaluate_cmd(args: EvaluateArgs, file: &ConfigFile) -> Result<ExitCode> {
    let format = format(args.format, file)?;
    let gold = read_corpus(&args.gold, format)?;
    let pred = read_corpus(&args.pred, format)?;
    let report = evaluate(&gold, &pred)?;
    if args.json {
        println!("{}", serde_json::to_string(&report)?);
    } else {
        println!("{report}");
    }
    Ok(ExitCode::SUCCESS)
}

fn induce(args: InduceArgs, file: &ConfigFile) -> Result<ExitCode> {
    let format = format(args.format, file)?;
    let model = load_model(&args.model)?;
    let order = file.resolve(args.order, "order", model_order(&model))?;
    let corpus = read_corpus(&args.input, format)?;
    let trees = corpus
        .par_iter()
        .enumerate()
        .map(|(i, a)| {
            let (tree, _) = decode_full_tree(&model.scorer.score(&a.sentence, order), order)
                .with_context(|| format!("sentence {}", i + 1))?;
            Ok(FullTree {
                tokens: a.sentence.tokens().to_vec(),
                heads: tree.heads()[1..].to_vec(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = open_output(&args.output)?;
    write_full_trees(&mut out, &trees)?;
    out.flush()?;
    if let Some(reference) = &args.reference {
        let reference = read_full_trees(open_input(reference)?)
            .with_context(|| format!("reading {}", reference.display()))?;
        eprintln!(
            "attachment agreement {:.2}",
            attachment_agreement(&trees, &reference)?
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn random_scores(rng: &mut ChaCha8Rng, n: usize, roles: &Arc<RoleInventory>) -> ScoreTables {
    let k = roles.len() + 1;
    let dim = n + 1;
    let root: Vec<[f64; 2]> = (0..dim)
        .map(|_| [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)])
        .collect();
    let arcs: Vec<f64> = (0..dim * dim * k)
        .map(|_| rng.gen_range(-2.0..2.0))
        .collect();
    let labels = LabelTable::from_logits(n, Arc::clone(roles), &root, &arcs);
    ScoreTables::from_fn(n, |_, _| rng.gen_range(-2.0..2.0))
        .with_sib_fn(|_, _, _| rng.gen_range(-2.0..2.0))
        .with_labels(labels)
}

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Mismatch descriptions for one sentence at one order.
fn audit(
    annotation: &SrlAnnotation,
    scores: &ScoreTables,
    order: Order,
    variant: Variant,
    fault: Fault,
) -> Result<(usize, Vec<String>)> {
    let mut checks = 0;
    let mut bad = Vec::new();
    let mut compare = |what: String, chart: f64, oracle: f64| {
        checks += 1;
        if !close(chart, oracle) {
            bad.push(format!("{what}: chart {chart} oracle {oracle}"));
        }
    };
    compare(
        "inside".into(),
        inside(scores, order, None)?,
        brute_log_z(scores, order, None, None)?,
    );
    let (tree, score) = decode_full_tree(scores, order)?;
    let (best, best_score) = brute_best(scores, order, None, None)?;
    compare("decode score".into(), score, best_score);
    compare("decode tree".into(), f64::from(u8::from(tree == best)), 1.0);
    for frame in annotation.frames() {
        let p = frame.predicate;
        let (_, score) = eisner_decode(scores, p, order)?;
        let (_, best_score) = brute_best(scores, order, Some(p), None)?;
        compare(format!("decode rooted at {p}"), score, best_score);
        let c = ForestConstraints::new(&annotation.sentence, frame, variant)?;
        compare(
            format!("constrained inside for predicate {p}"),
            inside_constrained_with_fault(scores, order, &c, fault)?,
            brute_log_z(scores, order, None, Some(&c))?,
        );
    }
    Ok((checks, bad))
}

fn check(args: CheckArgs, file: &ConfigFile) -> Result<ExitCode> {
    let format = format(args.format, file)?;
    let variant = file.resolve(args.variant, "variant", Variant::Latent)?;
    let seed = file.resolve(args.seed, "seed", 0)?;
    let orders = match file.resolve_opt(args.order, "order")? {
        Some(o) => vec![o],
        None => vec![Order::First, Order::Second],
    };
    let fault = match args.fault {
        FaultArg::None => Fault::None,
        FaultArg::Close => Fault::IgnoreCloseMask,
        FaultArg::Sibling => Fault::IgnoreSiblingMask,
    };
    let corpus = read_corpus(&args.input, format)?;
    let model = args.model.as_deref().map(load_model).transpose()?;
    let roles = Arc::new(RoleInventory::from_corpus(&corpus));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jobs = Vec::new();
    let mut skipped = 0;
    for (i, a) in corpus.iter().enumerate() {
        let n = a.sentence.len();
        if n > MAX_BRUTE {
            eprintln!(
                "warning: sentence {} has {n} tokens, more than {MAX_BRUTE}; skipped",
                i + 1
            );
            skipped += 1;
            continue;
        }
        let random = random_scores(&mut rng, n, &roles);
        for &order in &orders {
            let scores = match &model {
                Some(m) => m.scorer.score(&a.sentence, order),
                None => random.clone(),
            };
            jobs.push((i, order, scores));
        }
    }
    let results = jobs
        .par_iter()
        .map(|(i, order, scores)| {
            audit(&corpus[*i], scores, *order, variant, fault)
                .with_context(|| format!("sentence {}", i + 1))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut checks = 0;
    let mut mismatches = 0;
    for ((i, order, _), (n, bad)) in jobs.iter().zip(results) {
        checks += n;
        mismatches += bad.len();
        for b in bad {
            println!("MISMATCH sentence {} order {}: {b}", i + 1, order.as_u8());
        }
    }
    println!(
        "checked {} sentences ({skipped} skipped), {checks} comparisons, {mismatches} mismatches",
        corpus.len() - skipped
    );
    Ok(if mismatches == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(VERIFICATION_FAILURE)
    })
}

fn synth(args: SynthArgs, file: &ConfigFile) -> Result<ExitCode> {
    let format = format(args.format, file)?;
    let config = SynthConfig {
        sentences: args.sentences,
        min_len: args.min_len,
        max_len: args.max_len,
        max_predicates: args.max_predicates,
        max_args: args.max_args,
        seed: file.resolve(args.seed, "seed", 0)?,
    };
    write_corpus(&args.output, format, &synth_corpus(&config)?)?;
    Ok(ExitCode::SUCCESS)
}
