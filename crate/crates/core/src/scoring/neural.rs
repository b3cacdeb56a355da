//! Windowed feed-forward encoder with biaffine arc, multi-label biaffine
//! label and triaffine sibling heads.

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::autodiff::{Graph, Tensor, Var};
use super::TableGrads;
use crate::chart::{is_sibling_triple, LabelTable, Order, ScoreTables};
use crate::types::{RoleInventory, Sentence};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const ROOT: usize = 2;
const RESERVED: [&str; 3] = ["<pad>", "<unk>", "<root>"];

/// Token vocabulary with reserved PAD, UNK and ROOT rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(words: Vec<String>) -> Self {
        Vocab::new(words)
    }
}

impl From<Vocab> for Vec<String> {
    fn from(vocab: Vocab) -> Self {
        vocab.words[RESERVED.len()..].to_vec()
    }
}

impl Vocab {
    /// Vocabulary over the given words (duplicates and reserved names dropped).
    pub fn new(words: impl IntoIterator<Item = String>) -> Self {
        let mut all: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let mut index: HashMap<String, usize> = all
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, w)| (w, i))
            .collect();
        for w in words {
            if !index.contains_key(&w) {
                index.insert(w.clone(), all.len());
                all.push(w);
            }
        }
        Vocab { words: all, index }
    }

    /// Sorted vocabulary of every token in the sentences.
    pub fn from_sentences<'a>(sentences: impl IntoIterator<Item = &'a Sentence>) -> Self {
        let mut words: Vec<String> = sentences
            .into_iter()
            .flat_map(|s| s.tokens().iter().cloned())
            .collect();
        words.sort_unstable();
        words.dedup();
        Vocab::new(words)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, word: &str) -> usize {
        match self.index.get(word) {
            Some(&i) if i >= RESERVED.len() => i,
            _ => UNK,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeuralConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub arc_dim: usize,
    pub label_dim: usize,
    pub sib_dim: usize,
}

impl Default for NeuralConfig {
    fn default() -> Self {
        NeuralConfig {
            embed_dim: 32,
            hidden_dim: 64,
            arc_dim: 64,
            label_dim: 64,
            sib_dim: 32,
        }
    }
}

/// Names and shapes of every parameter tensor, in storage order.
fn layout(config: &NeuralConfig, vocab: usize, labels: usize) -> Vec<(&'static str, Vec<usize>)> {
    let NeuralConfig {
        embed_dim: e,
        hidden_dim: d,
        arc_dim: a,
        label_dim: l,
        sib_dim: s,
    } = *config;
    vec![
        ("embed", vec![vocab, e]),
        ("enc.w", vec![3 * e, d]),
        ("enc.b", vec![d]),
        ("arc.head.w", vec![d, a]),
        ("arc.head.b", vec![a]),
        ("arc.mod.w", vec![d, a]),
        ("arc.mod.b", vec![a]),
        ("arc.biaffine", vec![a + 1, a + 1]),
        ("label.head.w", vec![d, l]),
        ("label.head.b", vec![l]),
        ("label.mod.w", vec![d, l]),
        ("label.mod.b", vec![l]),
        ("label.biaffine", vec![labels, l + 1, l + 1]),
        ("sib.head.w", vec![d, s]),
        ("sib.head.b", vec![s]),
        ("sib.mod.w", vec![d, s]),
        ("sib.mod.b", vec![s]),
        ("sib.sib.w", vec![d, s]),
        ("sib.sib.b", vec![s]),
        ("sib.triaffine", vec![s + 1, s + 1, s + 1]),
    ]
}

/// Parameters of the neural scorer.
///
/// Label biaffine index 0 is NULL, 1 is PRD and `r + 2` is role `r`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScorerParams {
    pub config: NeuralConfig,
    pub vocab: Vocab,
    roles: Arc<RoleInventory>,
    shapes: Vec<(&'static str, Vec<usize>)>,
    offsets: Vec<usize>,
    values: Vec<f64>,
}

/// Graph handles of one forward pass.
pub struct NeuralTape {
    graph: Graph,
    leaves: Vec<Var>,
    arcs: Var,
    labels: Var,
    sibs: Option<Var>,
}

impl ScorerParams {
    /// Uniform initialization in [-0.1, 0.1].
    pub fn new(config: NeuralConfig, vocab: Vocab, roles: Arc<RoleInventory>, seed: u64) -> Self {
        let mut params = ScorerParams::zeros(config, vocab, roles);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        params
            .values
            .iter_mut()
            .for_each(|v| *v = rng.gen_range(-0.1..=0.1));
        params
    }

    pub fn zeros(config: NeuralConfig, vocab: Vocab, roles: Arc<RoleInventory>) -> Self {
        let shapes = layout(&config, vocab.len(), roles.len() + 2);
        let mut offsets = Vec::with_capacity(shapes.len() + 1);
        let mut total = 0;
        for (_, shape) in &shapes {
            offsets.push(total);
            total += shape.iter().product::<usize>();
        }
        offsets.push(total);
        ScorerParams {
            config,
            vocab,
            roles,
            shapes,
            offsets,
            values: vec![0.0; total],
        }
    }

    pub fn roles(&self) -> &Arc<RoleInventory> {
        &self.roles
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// `(name, shape, values)` of every tensor.
    pub fn tensors(&self) -> impl Iterator<Item = (&str, &[usize], &[f64])> {
        self.shapes.iter().enumerate().map(|(i, (name, shape))| {
            (
                *name,
                shape.as_slice(),
                &self.values[self.offsets[i]..self.offsets[i + 1]],
            )
        })
    }

    /// Fill tensor `name`; shapes must match the layout.
    pub fn set_tensor(&mut self, name: &str, shape: &[usize], data: &[f64]) -> Result<(), String> {
        let i = self
            .shapes
            .iter()
            .position(|(n, _)| *n == name)
            .ok_or_else(|| format!("unknown tensor {name}"))?;
        if self.shapes[i].1 != shape {
            return Err(format!(
                "tensor {name} has shape {shape:?}, expected {:?}",
                self.shapes[i].1
            ));
        }
        self.values[self.offsets[i]..self.offsets[i + 1]].copy_from_slice(data);
        Ok(())
    }

    pub fn tensor_names(&self) -> impl Iterator<Item = &str> {
        self.shapes.iter().map(|(n, _)| *n)
    }

    fn leaves(&self, graph: &mut Graph) -> Vec<Var> {
        self.shapes
            .iter()
            .enumerate()
            .map(|(i, (_, shape))| {
                let data = self.values[self.offsets[i]..self.offsets[i + 1]].to_vec();
                graph.leaf(Tensor::new(shape.clone(), data))
            })
            .collect()
    }

    /// Run the encoder and every head on a fresh graph.
    pub fn forward(&self, sentence: &Sentence, order: Order) -> NeuralTape {
        let mut graph = Graph::new();
        let leaves = self.leaves(&mut graph);
        let reps = encode(&mut graph, &leaves, self, sentence);
        let arcs = score_arcs(&mut graph, &leaves, reps);
        let labels = score_labels(&mut graph, &leaves, reps, self.roles.len());
        let sibs = (order == Order::Second).then(|| score_siblings(&mut graph, &leaves, reps));
        NeuralTape {
            graph,
            leaves,
            arcs,
            labels,
            sibs,
        }
    }

    pub fn score(&self, sentence: &Sentence, order: Order) -> ScoreTables {
        self.tables(&self.forward(sentence, order), sentence.len())
    }

    /// Score tables read off a forward pass.
    pub fn tables(&self, tape: &NeuralTape, n: usize) -> ScoreTables {
        let dim = n + 1;
        let arcs = tape.graph.value(tape.arcs).data();
        let mut tables = ScoreTables::from_fn(n, |h, m| arcs[h * dim + m]);
        if let Some(sibs) = tape.sibs {
            let sib = tape.graph.value(sibs).data();
            tables = tables.with_sib_fn(|h, s, m| sib[(h * dim + s) * dim + m]);
        }
        let width = self.roles.len() + 2;
        let lp = tape.graph.value(tape.labels).data();
        let root = (0..dim)
            .map(|j| [lp[j * width + 1], lp[j * width]])
            .collect();
        let k = self.roles.len() + 1;
        let mut table = vec![0.0; dim * dim * k];
        for h in 1..dim {
            for m in 0..dim {
                let row = (h * dim + m) * width;
                let out = (h * dim + m) * k;
                table[out] = lp[row];
                table[out + 1..out + k].copy_from_slice(&lp[row + 2..row + width]);
            }
        }
        tables.with_labels(LabelTable::from_log_probs(
            n,
            self.roles.clone(),
            root,
            table,
        ))
    }

    /// Parameter gradient given gradients with respect to the score tables.
    pub fn backward(&self, tape: &NeuralTape, grads: &TableGrads) -> Vec<f64> {
        let dim = grads.n + 1;
        let mut arc_seed = grads.arc.clone();
        for h in 0..dim {
            for m in 0..dim {
                if h == m || m == 0 {
                    arc_seed[h * dim + m] = 0.0;
                }
            }
        }
        let width = self.roles.len() + 2;
        let k = self.roles.len() + 1;
        let mut label_seed = vec![0.0; dim * dim * width];
        for j in 0..dim {
            label_seed[j * width + 1] = grads.root[j][0];
            label_seed[j * width] = grads.root[j][1];
        }
        for h in 1..dim {
            for m in 0..dim {
                let row = (h * dim + m) * width;
                let src = (h * dim + m) * k;
                label_seed[row] = grads.labels[src];
                label_seed[row + 2..row + width].copy_from_slice(&grads.labels[src + 1..src + k]);
            }
        }
        let mut seeds: Vec<(Var, &[f64])> =
            vec![(tape.arcs, &arc_seed), (tape.labels, &label_seed)];
        let sib_seed;
        if let (Some(var), Some(g)) = (tape.sibs, grads.sib.as_ref()) {
            let mut masked = g.clone();
            for h in 0..dim {
                for s in 0..dim {
                    for m in 0..dim {
                        if !is_sibling_triple(h, s, m) {
                            masked[(h * dim + s) * dim + m] = 0.0;
                        }
                    }
                }
            }
            sib_seed = masked;
            seeds.push((var, &sib_seed));
        }
        let g = tape.graph.backward(&seeds);
        let mut out = vec![0.0; self.values.len()];
        for (i, &leaf) in tape.leaves.iter().enumerate() {
            if let Some(gl) = g.get(leaf) {
                out[self.offsets[i]..self.offsets[i + 1]].copy_from_slice(gl);
            }
        }
        out
    }
}

fn mlp(graph: &mut Graph, x: Var, w: Var, b: Var) -> Var {
    let h = graph.matmul(x, w);
    let h = graph.add_bias(h, b);
    graph.tanh(h)
}

/// Representations `h_0..h_n` as an `[n + 1, hidden]` matrix.
///
/// Each position concatenates the embeddings of itself and its two
/// neighbours; position 0 is the ROOT embedding and out-of-range neighbours
/// are PAD.
pub fn encode(
    graph: &mut Graph,
    leaves: &[Var],
    params: &ScorerParams,
    sentence: &Sentence,
) -> Var {
    let mut ids = Vec::with_capacity(sentence.len() + 1);
    ids.push(ROOT);
    ids.extend(sentence.tokens().iter().map(|t| params.vocab.id(t)));
    let prev: Vec<usize> = std::iter::once(PAD)
        .chain(ids[..ids.len() - 1].iter().copied())
        .collect();
    let next: Vec<usize> = ids[1..]
        .iter()
        .copied()
        .chain(std::iter::once(PAD))
        .collect();
    let parts = [prev, ids, next].map(|idx| graph.gather(leaves[0], idx));
    let window = graph.concat_cols(parts.to_vec());
    mlp(graph, window, leaves[1], leaves[2])
}

fn biaffine_inputs(graph: &mut Graph, reps: Var, w: Var, b: Var) -> Var {
    let r = mlp(graph, reps, w, b);
    graph.append_ones(r)
}

/// `[n + 1, n + 1]` arc scores, rows are heads and columns modifiers.
pub fn score_arcs(graph: &mut Graph, leaves: &[Var], reps: Var) -> Var {
    let head = biaffine_inputs(graph, reps, leaves[3], leaves[4]);
    let modifier = biaffine_inputs(graph, reps, leaves[5], leaves[6]);
    let hw = graph.matmul(head, leaves[7]);
    let mt = graph.transpose(modifier);
    graph.matmul(hw, mt)
}

/// `[(n + 1)², |R| + 2]` label log-probabilities: root rows over
/// {NULL, PRD}, all other rows over {NULL} ∪ R.
pub fn score_labels(graph: &mut Graph, leaves: &[Var], reps: Var, roles: usize) -> Var {
    let head = biaffine_inputs(graph, reps, leaves[8], leaves[9]);
    let modifier = biaffine_inputs(graph, reps, leaves[10], leaves[11]);
    let logits = graph.multi_bilinear(head, leaves[12], modifier);
    let dim = graph.value(reps).shape()[0];
    let width = roles + 2;
    let flat = graph.reshape(logits, vec![dim * dim, width]);
    let mut allowed = vec![false; dim * dim * width];
    for h in 0..dim {
        for m in 0..dim {
            let row = (h * dim + m) * width;
            allowed[row] = true;
            if h == 0 {
                allowed[row + 1] = true;
            } else {
                allowed[row + 2..row + width]
                    .iter_mut()
                    .for_each(|a| *a = true);
            }
        }
    }
    graph.log_softmax_rows(flat, allowed)
}

/// `[n + 1, n + 1, n + 1]` sibling scores laid out `(h, s, m)`.
pub fn score_siblings(graph: &mut Graph, leaves: &[Var], reps: Var) -> Var {
    let head = biaffine_inputs(graph, reps, leaves[13], leaves[14]);
    let modifier = biaffine_inputs(graph, reps, leaves[15], leaves[16]);
    let sibling = biaffine_inputs(graph, reps, leaves[17], leaves[18]);
    graph.trilinear(head, modifier, sibling, leaves[19])
}

/// Encoder output for one sentence as a plain tensor.
pub fn representations(params: &ScorerParams, sentence: &Sentence) -> Tensor {
    let mut graph = Graph::new();
    let leaves = params.leaves(&mut graph);
    let reps = encode(&mut graph, &leaves, params, sentence);
    graph.value(reps).clone()
}
