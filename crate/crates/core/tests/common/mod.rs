#![allow(dead_code)]

use std::sync::Arc;

use latent_srl::chart::{LabelTable, ScoreTables};
use latent_srl::types::{Argument, PredicateFrame, RoleInventory, Sentence};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ROLES: [&str; 3] = ["A0", "A1", "AM-TMP"];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn roles() -> Arc<RoleInventory> {
    Arc::new(RoleInventory::new(ROLES).unwrap())
}

pub fn sentence(n: usize) -> Sentence {
    Sentence::new((1..=n).map(|i| format!("w{i}")).collect()).unwrap()
}

/// Random valid frame: random predicate, random non-overlapping arguments.
pub fn random_frame(rng: &mut impl Rng, n: usize) -> PredicateFrame {
    let p = rng.gen_range(1..=n);
    let mut args = Vec::new();
    let mut pos = 1;
    while pos <= n {
        if pos == p || rng.gen_bool(0.35) {
            pos += 1;
            continue;
        }
        let limit = if pos < p { p - 1 } else { n };
        let end = rng.gen_range(pos..=limit.min(pos + 3));
        let role = *ROLES.choose(rng).unwrap();
        args.push(Argument::new(pos, end, role));
        pos = end + 1;
    }
    PredicateFrame::new(p, args)
}

pub fn random_labels(rng: &mut impl Rng, n: usize) -> LabelTable {
    let roles = roles();
    let k = roles.len() + 1;
    let root: Vec<[f64; 2]> = (0..=n)
        .map(|_| [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)])
        .collect();
    let arcs: Vec<f64> = (0..(n + 1) * (n + 1) * k)
        .map(|_| rng.gen_range(-2.0..2.0))
        .collect();
    LabelTable::from_logits(n, roles, &root, &arcs)
}

/// Random arc, sibling and label scores.
pub fn random_scores(rng: &mut impl Rng, n: usize) -> ScoreTables {
    let arcs: Vec<f64> = (0..(n + 1) * (n + 1))
        .map(|_| rng.gen_range(-2.0..2.0))
        .collect();
    let sibs: Vec<f64> = (0..(n + 1).pow(3))
        .map(|_| rng.gen_range(-2.0..2.0))
        .collect();
    let dim = n + 1;
    let labels = random_labels(rng, n);
    ScoreTables::from_fn(n, |h, m| arcs[h * dim + m])
        .with_sib_fn(|h, s, m| sibs[(h * dim + s) * dim + m])
        .with_labels(labels)
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Whether a central difference of a function with magnitude `value` agrees
/// with `analytic` to relative `tol`, beyond the difference's own rounding
/// noise of a few ulps of `value` divided by the step.
pub fn fd_agrees(numeric: f64, analytic: f64, value: f64, step: f64, tol: f64) -> bool {
    let noise = 8.0 * f64::EPSILON * value.abs().max(1.0) / step;
    (numeric - analytic).abs() <= tol * numeric.abs().max(analytic.abs()) + noise
}

/// Central difference of `f` at `x[i]`, restoring `x` afterwards.
pub fn central_difference(
    x: &mut [f64],
    i: usize,
    step: f64,
    mut f: impl FnMut(&[f64]) -> f64,
) -> f64 {
    let saved = x[i];
    x[i] = saved + step;
    let plus = f(x);
    x[i] = saved - step;
    let minus = f(x);
    x[i] = saved;
    (plus - minus) / (2.0 * step)
}

/// Sentence with one or two random frames on distinct predicates.
pub fn random_annotation(rng: &mut impl Rng, n: usize) -> latent_srl::types::SrlAnnotation {
    loop {
        let count = if n > 1 { rng.gen_range(1..=2) } else { 1 };
        let frames: Vec<PredicateFrame> = (0..count).map(|_| random_frame(rng, n)).collect();
        if let Ok(a) = latent_srl::types::SrlAnnotation::new(sentence(n), frames) {
            return a;
        }
    }
}
