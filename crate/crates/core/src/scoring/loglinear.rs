//! Log-linear scorer over hashed sparse features.
//!
//! Every arc, sibling triple and label decision fires a handful of hashed
//! feature indices; its score is the sum of their weights. Because the model
//! is linear, the parameter gradient is the table gradient scattered back onto
//! the features (for labels, through the local softmax).

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TableGrads;
use crate::chart::{is_sibling_triple, LabelTable, Order, ScoreTables};
use crate::types::{RoleInventory, Sentence};

pub const DEFAULT_BITS: u32 = 18;

/// Weights over a `2^bits` hash space.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureScorerParams {
    bits: u32,
    roles: Arc<RoleInventory>,
    weights: Vec<f64>,
}

/// Feature indices of one sentence in compressed rows.
#[derive(Clone, Debug, Default)]
struct Rows {
    offsets: Vec<u32>,
    indices: Vec<u32>,
}

impl Rows {
    fn new() -> Self {
        Rows {
            offsets: vec![0],
            indices: Vec::new(),
        }
    }

    fn close(&mut self) {
        self.offsets.push(self.indices.len() as u32);
    }

    fn row(&self, i: usize) -> &[u32] {
        &self.indices[self.offsets[i] as usize..self.offsets[i + 1] as usize]
    }
}

/// Precomputed features of one sentence.
#[derive(Clone, Debug)]
pub struct SentenceFeatures {
    n: usize,
    /// `(n + 1)²` rows.
    arcs: Rows,
    /// `(n + 1)³` rows; empty when not scoring siblings.
    sibs: Option<Rows>,
    /// `(n + 1) × 2` rows, PRD then NULL.
    root_labels: Rows,
    /// `(n + 1)² × (|R| + 1)` rows.
    arc_labels: Rows,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn hash_str(s: &str) -> u64 {
    s.bytes()
        .fold(FNV_OFFSET, |h, b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Order-dependent combination of feature parts.
fn mix(parts: &[u64]) -> u64 {
    mix_into(0x9e37_79b9_7f4a_7c15, parts)
}

fn mix_into(mut h: u64, parts: &[u64]) -> u64 {
    for &p in parts {
        h ^= p
            .wrapping_add(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(h << 6)
            .wrapping_add(h >> 2);
        h = splitmix(h);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn distance_bucket(d: usize) -> u64 {
    match d {
        0..=4 => d as u64,
        5..=6 => 5,
        7..=10 => 6,
        _ => 7,
    }
}

// Template ids.
const T_ARC: u64 = 1;
const T_SIB: u64 = 2;
const T_ROOT_LABEL: u64 = 3;
const T_ARC_LABEL: u64 = 4;

impl FeatureScorerParams {
    /// Uniform initialization in [-0.1, 0.1].
    pub fn new(bits: u32, roles: Arc<RoleInventory>, seed: u64) -> Self {
        let mut params = FeatureScorerParams::zeros(bits, roles);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        params
            .weights
            .iter_mut()
            .for_each(|w| *w = rng.gen_range(-0.1..=0.1));
        params
    }

    pub fn zeros(bits: u32, roles: Arc<RoleInventory>) -> Self {
        assert!((1..=28).contains(&bits), "hash bits must be in 1..=28");
        FeatureScorerParams {
            bits,
            roles,
            weights: vec![0.0; 1 << bits],
        }
    }

    pub fn from_weights(
        bits: u32,
        roles: Arc<RoleInventory>,
        weights: Vec<f64>,
    ) -> Result<Self, String> {
        if !(1..=28).contains(&bits) || weights.len() != 1 << bits {
            return Err(format!(
                "{} weights do not fill a {bits}-bit hash space",
                weights.len()
            ));
        }
        Ok(FeatureScorerParams {
            bits,
            roles,
            weights,
        })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn roles(&self) -> &Arc<RoleInventory> {
        &self.roles
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    /// Index of the concatenation `prefix ++ parts`.
    fn index2(&self, prefix: &[u64], parts: &[u64]) -> u32 {
        (mix_into(mix(prefix), parts) & ((1u64 << self.bits) - 1)) as u32
    }

    /// Extract the features of every score entry of `sentence`.
    pub fn features(&self, sentence: &Sentence, order: Order) -> SentenceFeatures {
        let n = sentence.len();
        let dim = n + 1;
        // Word ids with boundary symbols at -1 and n + 1.
        let mut words = Vec::with_capacity(n + 3);
        words.push(hash_str("<s>"));
        words.push(hash_str("<root>"));
        words.extend(sentence.tokens().iter().map(|t| hash_str(t)));
        words.push(hash_str("</s>"));
        let w = |i: usize| words[i + 1];
        let prev = |i: usize| words[i];
        let next = |i: usize| words[i + 2];

        let mut arcs = Rows::new();
        let mut f = Vec::new();
        for h in 0..dim {
            for m in 0..dim {
                if h != m && m != 0 {
                    let dir = (h < m) as u64;
                    let d = distance_bucket(h.abs_diff(m));
                    let (wh, wm) = (w(h), w(m));
                    let base: [&[u64]; 11] = [
                        &[0, dir, d],
                        &[1, wh, dir],
                        &[2, wm, dir],
                        &[3, wh, wm, dir],
                        &[4, wh, dir, d],
                        &[5, wm, dir, d],
                        &[6, wh, wm, dir, d],
                        &[7, wh, prev(m), wm, dir],
                        &[8, wh, wm, next(m), dir],
                        &[9, prev(h), wh, wm, dir],
                        &[10, wh, next(h), wm, dir],
                    ];
                    f.clear();
                    for parts in base {
                        f.push(self.index2(&[T_ARC], parts));
                    }
                    for k in h.min(m) + 1..h.max(m) {
                        f.push(self.index2(&[T_ARC], &[11, wh, w(k), dir]));
                        f.push(self.index2(&[T_ARC], &[12, wm, w(k), dir]));
                    }
                    arcs.indices.extend_from_slice(&f);
                }
                arcs.close();
            }
        }

        let sibs = (order == Order::Second).then(|| {
            let mut rows = Rows::new();
            for h in 0..dim {
                for s in 0..dim {
                    for m in 0..dim {
                        if is_sibling_triple(h, s, m) {
                            let dir = (h < m) as u64;
                            let (wh, ws, wm) = (w(h), w(s), w(m));
                            let d = distance_bucket(s.abs_diff(m));
                            for parts in [
                                &[0, dir, d][..],
                                &[1, wh, ws, wm, dir],
                                &[2, ws, wm, dir],
                                &[3, wh, wm, dir],
                                &[4, wh, ws, dir],
                                &[5, ws, wm, dir, d],
                            ] {
                                rows.indices.push(self.index2(&[T_SIB], parts));
                            }
                        }
                        rows.close();
                    }
                }
            }
            rows
        });

        let mut root_labels = Rows::new();
        for j in 0..dim {
            let (wj, wp, wn) = (w(j), prev(j), next(j));
            let base: [&[u64]; 6] = [
                &[0],
                &[1, wj],
                &[2, wp],
                &[3, wn],
                &[4, wp, wj],
                &[5, wj, wn],
            ];
            for label in 0..2u64 {
                for parts in base {
                    root_labels
                        .indices
                        .push(self.index2(&[T_ROOT_LABEL, label], parts));
                }
                root_labels.close();
            }
        }

        let k = self.roles.len() + 1;
        let mut arc_labels = Rows::new();
        let mut base: Vec<Vec<u64>> = Vec::new();
        for h in 0..dim {
            for m in 0..dim {
                base.clear();
                if h >= 1 && h != m && m != 0 {
                    let dir = (h < m) as u64;
                    let d = distance_bucket(h.abs_diff(m));
                    let (wh, wm) = (w(h), w(m));
                    base.extend([
                        vec![0],
                        vec![1, wm],
                        vec![2, wh, wm],
                        vec![3, wh, wm, dir],
                        vec![4, dir, d],
                        vec![5, wm, dir],
                        vec![6, prev(m), wm],
                        vec![7, wm, next(m)],
                    ]);
                    for between in h.min(m) + 1..h.max(m) {
                        base.push(vec![8, w(between), dir]);
                    }
                }
                for label in 0..k as u64 {
                    for parts in &base {
                        arc_labels
                            .indices
                            .push(self.index2(&[T_ARC_LABEL, label], parts));
                    }
                    arc_labels.close();
                }
            }
        }

        SentenceFeatures {
            n,
            arcs,
            sibs,
            root_labels,
            arc_labels,
        }
    }

    fn dot(&self, row: &[u32]) -> f64 {
        row.iter().map(|&i| self.weights[i as usize]).sum()
    }

    /// Score tables of precomputed features.
    pub fn tables(&self, feats: &SentenceFeatures) -> ScoreTables {
        let n = feats.n;
        let dim = n + 1;
        let mut tables = ScoreTables::from_fn(n, |h, m| self.dot(feats.arcs.row(h * dim + m)));
        if let Some(sibs) = &feats.sibs {
            tables = tables.with_sib_fn(|h, s, m| self.dot(sibs.row((h * dim + s) * dim + m)));
        }
        let root: Vec<[f64; 2]> = (0..dim)
            .map(|j| {
                [
                    self.dot(feats.root_labels.row(2 * j)),
                    self.dot(feats.root_labels.row(2 * j + 1)),
                ]
            })
            .collect();
        let k = self.roles.len() + 1;
        let arc_logits: Vec<f64> = (0..dim * dim * k)
            .map(|r| self.dot(feats.arc_labels.row(r)))
            .collect();
        tables.with_labels(LabelTable::from_logits(
            n,
            self.roles.clone(),
            &root,
            &arc_logits,
        ))
    }

    pub fn score(&self, sentence: &Sentence, order: Order) -> ScoreTables {
        self.tables(&self.features(sentence, order))
    }

    /// Sparse parameter gradient `(index, value)` given table gradients and
    /// the tables the features produced.
    pub fn backward(
        &self,
        feats: &SentenceFeatures,
        tables: &ScoreTables,
        grads: &TableGrads,
    ) -> Vec<(u32, f64)> {
        let n = feats.n;
        let dim = n + 1;
        let mut out = Vec::new();
        let mut scatter = |row: &[u32], g: f64| {
            if g != 0.0 && g.is_finite() {
                out.extend(row.iter().map(|&i| (i, g)));
            }
        };
        for h in 0..dim {
            for m in 1..dim {
                if h != m {
                    scatter(feats.arcs.row(h * dim + m), grads.arc[h * dim + m]);
                }
            }
        }
        if let (Some(rows), Some(g)) = (&feats.sibs, &grads.sib) {
            for h in 1..dim {
                for s in 1..dim {
                    for m in 1..dim {
                        if is_sibling_triple(h, s, m) {
                            let i = (h * dim + s) * dim + m;
                            scatter(rows.row(i), g[i]);
                        }
                    }
                }
            }
        }
        let labels = tables.labels().expect("log-linear tables carry labels");
        for j in 0..dim {
            let lp = labels.root_row(j);
            let g = grads.root[j];
            let total = g[0] + g[1];
            for l in 0..2 {
                scatter(feats.root_labels.row(2 * j + l), g[l] - lp[l].exp() * total);
            }
        }
        let k = self.roles.len() + 1;
        for h in 1..dim {
            for m in 1..dim {
                let base = (h * dim + m) * k;
                let g = &grads.labels[base..base + k];
                let total: f64 = g.iter().sum();
                if total == 0.0 && g.iter().all(|&v| v == 0.0) {
                    continue;
                }
                let lp = labels.arc_row(h, m);
                for l in 0..k {
                    scatter(feats.arc_labels.row(base + l), g[l] - lp[l].exp() * total);
                }
            }
        }
        out
    }
}
