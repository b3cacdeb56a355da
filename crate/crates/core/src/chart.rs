//! Log-semiring chart algorithms over projective trees.
//!
//! First- and second-order Eisner charts are materialized as a small
//! hypergraph whose edges carry at most one arc factor and one sibling
//! factor. Inside sums, reverse-mode marginals, the log-space Outside pass and
//! Viterbi decoding all run over the same edge list, so span constraints only
//! have to be expressed once, while the graph is built.
//!
//! The tree space is the set of projective trees in which the root has
//! exactly one child.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::convert::{ForestConstraints, Variant};
use crate::types::{ArcLabel, DepTree, RoleInventory, SegmentKind};

pub const NEG_INF: f64 = f64::NEG_INFINITY;

const NONE: u32 = u32::MAX;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ChartError {
    #[error("every tree has score -inf")]
    AllMasked,

    #[error("the constrained forest is empty")]
    EmptyForest,

    #[error("second-order chart requires sibling scores")]
    MissingSiblings,

    #[error("role `{0}` is not in the label inventory")]
    UnknownRole(String),

    #[error("score tables cover {tables} tokens but constraints cover {constraints}")]
    LengthMismatch { tables: usize, constraints: usize },
}

/// Factorization order of the tree score.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Order {
    /// Arc-factored.
    #[default]
    First,
    /// Arc plus adjacent-sibling factors.
    Second,
}

impl Order {
    pub fn as_u8(self) -> u8 {
        match self {
            Order::First => 1,
            Order::Second => 2,
        }
    }
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

impl FromStr for Order {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "1" | "first" => Ok(Order::First),
            "2" | "second" => Ok(Order::Second),
            other => Err(format!("unknown order `{other}`, expected 1 or 2")),
        }
    }
}

/// Numerically stable `log(exp(a) + exp(b))`, with -inf as identity.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == NEG_INF {
        return b;
    }
    if b == NEG_INF {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Numerically stable log-sum-exp of a slice; -inf for an empty slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(NEG_INF, f64::max);
    if max == NEG_INF {
        return NEG_INF;
    }
    if max == f64::INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Per-arc label log-probabilities.
///
/// Root arcs `0 -> j` are distributed over `{PRD, NULL}`; arcs `h -> m` with
/// `h >= 1` over `{NULL} ∪ R`, where index 0 is NULL and index `r + 1` is
/// role `r` of the inventory.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelTable {
    n: usize,
    roles: Arc<RoleInventory>,
    root: Vec<[f64; 2]>,
    arcs: Vec<f64>,
}

impl LabelTable {
    /// Number of labels available on non-root arcs.
    pub fn arc_label_count(roles: &RoleInventory) -> usize {
        roles.len() + 1
    }

    /// Table with log-probability 0 for every label (no label evidence).
    pub fn zeros(n: usize, roles: Arc<RoleInventory>) -> Self {
        let k = Self::arc_label_count(&roles);
        LabelTable {
            n,
            root: vec![[0.0; 2]; n + 1],
            arcs: vec![0.0; (n + 1) * (n + 1) * k],
            roles,
        }
    }

    /// Build from raw label scores by local log-softmax normalization.
    ///
    /// `root_logits[j] = [PRD, NULL]`, `arc_logits` is laid out like the table.
    pub fn from_logits(
        n: usize,
        roles: Arc<RoleInventory>,
        root_logits: &[[f64; 2]],
        arc_logits: &[f64],
    ) -> Self {
        let k = Self::arc_label_count(&roles);
        assert_eq!(root_logits.len(), n + 1);
        assert_eq!(arc_logits.len(), (n + 1) * (n + 1) * k);
        let root = root_logits
            .iter()
            .map(|&[prd, null]| {
                let z = log_add_exp(prd, null);
                [prd - z, null - z]
            })
            .collect();
        let mut arcs = arc_logits.to_vec();
        for row in arcs.chunks_mut(k) {
            let z = log_sum_exp(row);
            row.iter_mut().for_each(|v| *v -= z);
        }
        LabelTable {
            n,
            roles,
            root,
            arcs,
        }
    }

    /// Wrap already-normalized log-probabilities laid out like [`from_logits`](Self::from_logits).
    pub fn from_log_probs(
        n: usize,
        roles: Arc<RoleInventory>,
        root: Vec<[f64; 2]>,
        arcs: Vec<f64>,
    ) -> Self {
        assert_eq!(root.len(), n + 1);
        assert_eq!(
            arcs.len(),
            (n + 1) * (n + 1) * Self::arc_label_count(&roles)
        );
        LabelTable {
            n,
            roles,
            root,
            arcs,
        }
    }

    /// Flat `(n + 1)² × (|R| + 1)` arc-label array.
    pub fn arc_values(&self) -> &[f64] {
        &self.arcs
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn roles(&self) -> &Arc<RoleInventory> {
        &self.roles
    }

    pub fn root_prd(&self, j: usize) -> f64 {
        self.root[j][0]
    }

    pub fn root_null(&self, j: usize) -> f64 {
        self.root[j][1]
    }

    pub fn root_row(&self, j: usize) -> [f64; 2] {
        self.root[j]
    }

    pub fn set_root_row(&mut self, j: usize, row: [f64; 2]) {
        self.root[j] = row;
    }

    /// Log-probabilities of labels on arc `h -> m`, `h >= 1`.
    pub fn arc_row(&self, h: usize, m: usize) -> &[f64] {
        let k = self.roles.len() + 1;
        let base = (h * (self.n + 1) + m) * k;
        &self.arcs[base..base + k]
    }

    pub fn arc_row_mut(&mut self, h: usize, m: usize) -> &mut [f64] {
        let k = self.roles.len() + 1;
        let base = (h * (self.n + 1) + m) * k;
        &mut self.arcs[base..base + k]
    }

    /// Index of a non-root label within an arc row.
    pub fn label_index(&self, label: &ArcLabel) -> Result<usize, ChartError> {
        match label {
            ArcLabel::Null => Ok(0),
            ArcLabel::Role(role) => self
                .roles
                .id(role)
                .map(|r| r + 1)
                .ok_or_else(|| ChartError::UnknownRole(role.clone())),
            ArcLabel::Prd => Err(ChartError::UnknownRole("PRD".into())),
        }
    }

    pub fn label_name(&self, index: usize) -> ArcLabel {
        if index == 0 {
            ArcLabel::Null
        } else {
            ArcLabel::Role(self.roles.name(index - 1).to_owned())
        }
    }

    /// Log-probability of `label` on arc `h -> m`.
    pub fn log_prob(&self, h: usize, m: usize, label: &ArcLabel) -> Result<f64, ChartError> {
        if h == 0 {
            return match label {
                ArcLabel::Prd => Ok(self.root_prd(m)),
                ArcLabel::Null => Ok(self.root_null(m)),
                ArcLabel::Role(role) => Err(ChartError::UnknownRole(role.clone())),
            };
        }
        Ok(self.arc_row(h, m)[self.label_index(label)?])
    }
}

/// Dense arc, sibling and label scores for one sentence.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreTables {
    n: usize,
    arc: Vec<f64>,
    sib: Option<Vec<f64>>,
    labels: Option<LabelTable>,
}

impl ScoreTables {
    /// Arc scores from a function; self-arcs and arcs into the root are masked.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let dim = n + 1;
        let mut arc = vec![NEG_INF; dim * dim];
        for h in 0..dim {
            for m in 1..dim {
                if h != m {
                    arc[h * dim + m] = f(h, m);
                }
            }
        }
        ScoreTables {
            n,
            arc,
            sib: None,
            labels: None,
        }
    }

    pub fn zeros(n: usize) -> Self {
        ScoreTables::from_fn(n, |_, _| 0.0)
    }

    /// Adjacent-sibling scores from a function, defined on triples with `s`
    /// strictly between `h` and `m` and `h >= 1`; every other entry is -inf.
    pub fn with_sib_fn(mut self, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let dim = self.n + 1;
        let mut sib = vec![NEG_INF; dim * dim * dim];
        for h in 1..dim {
            for s in 1..dim {
                for m in 1..dim {
                    if is_sibling_triple(h, s, m) {
                        sib[(h * dim + s) * dim + m] = f(h, s, m);
                    }
                }
            }
        }
        self.sib = Some(sib);
        self
    }

    pub fn with_zero_sibs(self) -> Self {
        self.with_sib_fn(|_, _, _| 0.0)
    }

    pub fn with_labels(mut self, labels: LabelTable) -> Self {
        assert_eq!(labels.len(), self.n, "label table length");
        self.labels = Some(labels);
        self
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn arc(&self, h: usize, m: usize) -> f64 {
        self.arc[h * (self.n + 1) + m]
    }

    /// Overwrite one arc score. Masked positions stay masked.
    pub fn set_arc(&mut self, h: usize, m: usize, value: f64) {
        if h != m && m != 0 {
            self.arc[h * (self.n + 1) + m] = value;
        }
    }

    pub fn arcs(&self) -> &[f64] {
        &self.arc
    }

    #[inline]
    pub fn sib(&self, h: usize, s: usize, m: usize) -> f64 {
        let dim = self.n + 1;
        self.sib
            .as_ref()
            .map_or(NEG_INF, |sib| sib[(h * dim + s) * dim + m])
    }

    pub fn set_sib(&mut self, h: usize, s: usize, m: usize, value: f64) {
        let dim = self.n + 1;
        if let Some(sib) = self.sib.as_mut() {
            if is_sibling_triple(h, s, m) {
                sib[(h * dim + s) * dim + m] = value;
            }
        }
    }

    pub fn sibs(&self) -> Option<&[f64]> {
        self.sib.as_deref()
    }

    pub fn has_sibs(&self) -> bool {
        self.sib.is_some()
    }

    pub fn labels(&self) -> Option<&LabelTable> {
        self.labels.as_ref()
    }

    pub fn labels_mut(&mut self) -> Option<&mut LabelTable> {
        self.labels.as_mut()
    }

    /// Score of an unlabeled tree under the given factorization.
    pub fn tree_score(&self, tree: &DepTree, order: Order) -> f64 {
        let n = tree.len();
        let mut score = 0.0;
        for m in 1..=n {
            score += self.arc(tree.head(m), m);
        }
        if order == Order::Second {
            for h in 1..=n {
                let children = tree.children(h);
                let split = children.partition_point(|&c| c < h);
                let (left, right) = children.split_at(split);
                for pair in right.windows(2) {
                    score += self.sib(h, pair[0], pair[1]);
                }
                for pair in left.windows(2).rev() {
                    score += self.sib(h, pair[1], pair[0]);
                }
            }
        }
        score
    }
}

/// `s` lies strictly between head `h` and modifier `m`.
#[inline]
pub fn is_sibling_triple(h: usize, s: usize, m: usize) -> bool {
    h >= 1 && m >= 1 && ((h < s && s < m) || (m < s && s < h))
}

/// Log partition and posterior marginals of a chart.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartResult {
    n: usize,
    pub log_z: f64,
    arc_marginals: Vec<f64>,
    sib_marginals: Option<Vec<f64>>,
}

impl ChartResult {
    pub fn arc_marginal(&self, h: usize, m: usize) -> f64 {
        self.arc_marginals[h * (self.n + 1) + m]
    }

    pub fn sib_marginal(&self, h: usize, s: usize, m: usize) -> f64 {
        let dim = self.n + 1;
        self.sib_marginals
            .as_ref()
            .map_or(0.0, |sib| sib[(h * dim + s) * dim + m])
    }

    pub fn arc_marginals(&self) -> &[f64] {
        &self.arc_marginals
    }

    pub fn sib_marginals(&self) -> Option<&[f64]> {
        self.sib_marginals.as_deref()
    }
}

/// Deliberate chart defects for negative-control audits.
#[doc(hidden)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Fault {
    #[default]
    None,
    /// Let predicate-headed complete items close anywhere.
    IgnoreCloseMask,
    /// Allow two predicate children inside one argument (second order).
    IgnoreSiblingMask,
}

/// Structural restrictions on predicate-headed items.
struct PredicateMask {
    predicate: usize,
    /// `closable[i]`: a predicate-headed complete item may end at `i`.
    closable: Vec<bool>,
    /// Argument segment id per position, `NONE` outside arguments.
    argument_of: Vec<u32>,
}

impl PredicateMask {
    fn new(c: &ForestConstraints, fault: Fault) -> Self {
        let n = c.len();
        let p = c.predicate();
        let mut closable = vec![true; n + 1];
        let mut argument_of = vec![NONE; n + 1];
        for (idx, segment) in c.partition.segments().iter().enumerate() {
            if let SegmentKind::Argument(_) = segment.kind {
                let span = segment.span;
                let far_end = if span.start > p { span.end } else { span.start };
                for pos in span.start..=span.end {
                    argument_of[pos] = idx as u32;
                    closable[pos] = pos == far_end || fault == Fault::IgnoreCloseMask;
                }
            }
        }
        if fault == Fault::IgnoreSiblingMask {
            argument_of.iter_mut().for_each(|a| *a = NONE);
        }
        PredicateMask {
            predicate: p,
            closable,
            argument_of,
        }
    }

    fn may_close(&self, head: usize, end: usize) -> bool {
        head != self.predicate || self.closable[end]
    }

    /// R-Link2: the predicate may not take adjacent children `s`, `m` in
    /// the same argument.
    fn may_link_siblings(&self, head: usize, s: usize, m: usize) -> bool {
        head != self.predicate
            || self.argument_of[s] == NONE
            || self.argument_of[s] != self.argument_of[m]
    }
}

#[derive(Clone, Copy, Debug)]
struct Edge {
    left: u32,
    right: u32,
    arc: u32,
    sib: u32,
}

/// Chart hypergraph with items in topological order.
struct Hypergraph {
    dim: usize,
    axiom: Vec<bool>,
    offsets: Vec<u32>,
    edges: Vec<Edge>,
}

#[derive(Clone, Copy)]
enum Kind {
    Complete = 0,
    Incomplete = 1,
    Sibling = 2,
}

struct Builder<'a> {
    dim: usize,
    slots: Vec<u32>,
    axiom: Vec<bool>,
    offsets: Vec<u32>,
    edges: Vec<Edge>,
    open: usize,
    mask: Option<&'a PredicateMask>,
}

impl<'a> Builder<'a> {
    fn new(n: usize, order: Order, mask: Option<&'a PredicateMask>) -> Self {
        let dim = n + 1;
        let kinds = if order == Order::Second { 3 } else { 2 };
        let approx_edges = dim * dim * dim;
        Builder {
            dim,
            slots: vec![NONE; kinds * dim * dim],
            axiom: Vec::with_capacity(kinds * dim * dim / 2),
            offsets: vec![0],
            edges: Vec::with_capacity(approx_edges),
            open: 0,
            mask,
        }
    }

    #[inline]
    fn get(&self, kind: Kind, a: usize, b: usize) -> u32 {
        self.slots[(kind as usize * self.dim + a) * self.dim + b]
    }

    #[inline]
    fn arc_index(&self, h: usize, m: usize) -> u32 {
        (h * self.dim + m) as u32
    }

    #[inline]
    fn sib_index(&self, h: usize, s: usize, m: usize) -> u32 {
        ((h * self.dim + s) * self.dim + m) as u32
    }

    fn axiom(&mut self, h: usize) {
        let id = self.axiom.len() as u32;
        self.axiom.push(true);
        self.offsets.push(self.edges.len() as u32);
        self.slots[(Kind::Complete as usize * self.dim + h) * self.dim + h] = id;
    }

    fn begin(&mut self) {
        self.open = self.edges.len();
    }

    #[inline]
    fn edge(&mut self, left: u32, right: u32, arc: u32, sib: u32) {
        if left != NONE && right != NONE {
            self.edges.push(Edge {
                left,
                right,
                arc,
                sib,
            });
        }
    }

    /// Close the open item; items without derivations are dropped.
    fn finish(&mut self, kind: Kind, a: usize, b: usize) -> u32 {
        if self.edges.len() == self.open {
            return NONE;
        }
        let id = self.axiom.len() as u32;
        self.axiom.push(false);
        self.offsets.push(self.edges.len() as u32);
        self.slots[(kind as usize * self.dim + a) * self.dim + b] = id;
        id
    }

    fn build(mut self, n: usize, order: Order, roots: &[usize]) -> (Hypergraph, u32) {
        use Kind::*;
        for h in 1..=n {
            self.axiom(h);
        }
        for w in 1..n {
            if order == Order::Second {
                for i in 1..=n - w {
                    let j = i + w;
                    self.begin();
                    for r in i..j {
                        let (l, rr) = (self.get(Complete, i, r), self.get(Complete, j, r + 1));
                        self.edge(l, rr, NONE, NONE);
                    }
                    self.finish(Sibling, i, j);
                }
            }
            for i in 1..=n - w {
                let j = i + w;
                // Head i, modifier j.
                let arc = self.arc_index(i, j);
                self.begin();
                match order {
                    Order::First => {
                        for k in i..j {
                            let (l, r) = (self.get(Complete, i, k), self.get(Complete, j, k + 1));
                            self.edge(l, r, arc, NONE);
                        }
                    }
                    Order::Second => {
                        let (l, r) = (self.get(Complete, i, i), self.get(Complete, j, i + 1));
                        self.edge(l, r, arc, NONE);
                        for s in i + 1..j {
                            if self.mask.is_some_and(|mk| !mk.may_link_siblings(i, s, j)) {
                                continue;
                            }
                            let (l, r) = (self.get(Incomplete, i, s), self.get(Sibling, s, j));
                            let sib = self.sib_index(i, s, j);
                            self.edge(l, r, arc, sib);
                        }
                    }
                }
                self.finish(Incomplete, i, j);

                // Head j, modifier i.
                let arc = self.arc_index(j, i);
                self.begin();
                match order {
                    Order::First => {
                        for k in i..j {
                            let (l, r) = (self.get(Complete, i, k), self.get(Complete, j, k + 1));
                            self.edge(l, r, arc, NONE);
                        }
                    }
                    Order::Second => {
                        let (l, r) = (self.get(Complete, i, j - 1), self.get(Complete, j, j));
                        self.edge(l, r, arc, NONE);
                        for s in i + 1..j {
                            if self.mask.is_some_and(|mk| !mk.may_link_siblings(j, s, i)) {
                                continue;
                            }
                            let (l, r) = (self.get(Sibling, i, s), self.get(Incomplete, j, s));
                            let sib = self.sib_index(j, s, i);
                            self.edge(l, r, arc, sib);
                        }
                    }
                }
                self.finish(Incomplete, j, i);
            }
            for i in 1..=n - w {
                let j = i + w;
                self.begin();
                if self.mask.is_none_or(|mk| mk.may_close(i, j)) {
                    for k in i + 1..=j {
                        let (l, r) = (self.get(Incomplete, i, k), self.get(Complete, k, j));
                        self.edge(l, r, NONE, NONE);
                    }
                }
                self.finish(Complete, i, j);

                self.begin();
                if self.mask.is_none_or(|mk| mk.may_close(j, i)) {
                    for k in i..j {
                        let (l, r) = (self.get(Complete, k, i), self.get(Incomplete, j, k));
                        self.edge(l, r, NONE, NONE);
                    }
                }
                self.finish(Complete, j, i);
            }
        }
        self.begin();
        for &r in roots {
            let (l, rr) = (self.get(Complete, r, 1), self.get(Complete, r, n));
            let arc = self.arc_index(0, r);
            self.edge(l, rr, arc, NONE);
        }
        // The goal is registered even without derivations so that passes can
        // report an empty space as -inf.
        let goal = self.axiom.len() as u32;
        self.axiom.push(false);
        self.offsets.push(self.edges.len() as u32);
        (
            Hypergraph {
                dim: self.dim,
                axiom: self.axiom,
                offsets: self.offsets,
                edges: self.edges,
            },
            goal,
        )
    }
}

/// Weighted hypergraph ready for evaluation.
struct Chart<'s> {
    graph: Hypergraph,
    goal: u32,
    arc: &'s [f64],
    sib: Option<&'s [f64]>,
}

impl<'s> Chart<'s> {
    fn new(
        n: usize,
        order: Order,
        roots: &[usize],
        mask: Option<&PredicateMask>,
        arc: &'s [f64],
        sib: Option<&'s [f64]>,
    ) -> Self {
        let (graph, goal) = Builder::new(n, order, mask).build(n, order, roots);
        Chart {
            graph,
            goal,
            arc,
            sib,
        }
    }

    fn items(&self) -> usize {
        self.graph.axiom.len()
    }

    #[inline]
    fn edges(&self, item: usize) -> &[Edge] {
        let lo = self.graph.offsets[item] as usize;
        let hi = self.graph.offsets[item + 1] as usize;
        &self.graph.edges[lo..hi]
    }

    #[inline]
    fn weight(&self, e: &Edge) -> f64 {
        let mut w = 0.0;
        if e.arc != NONE {
            w += self.arc[e.arc as usize];
        }
        if e.sib != NONE {
            w += self.sib.map_or(NEG_INF, |s| s[e.sib as usize]);
        }
        w
    }

    fn inside(&self) -> Vec<f64> {
        let mut ins = vec![NEG_INF; self.items()];
        let mut scratch = Vec::new();
        for item in 0..self.items() {
            if self.graph.axiom[item] {
                ins[item] = 0.0;
                continue;
            }
            scratch.clear();
            scratch.extend(
                self.edges(item)
                    .iter()
                    .map(|e| ins[e.left as usize] + ins[e.right as usize] + self.weight(e)),
            );
            ins[item] = log_sum_exp(&scratch);
        }
        ins
    }

    /// Reverse-mode differentiation of the inside recursion. Returns the
    /// gradients of the goal value with respect to arc and sibling scores.
    fn adjoint(&self, ins: &[f64]) -> (Vec<f64>, Option<Vec<f64>>) {
        let dim = self.graph.dim;
        let mut grad = vec![0.0; self.items()];
        let mut arc_grad = vec![0.0; dim * dim];
        let mut sib_grad = self.sib.map(|_| vec![0.0; dim * dim * dim]);
        grad[self.goal as usize] = 1.0;
        for item in (0..self.items()).rev() {
            let g = grad[item];
            if g == 0.0 || ins[item] == NEG_INF {
                continue;
            }
            for e in self.edges(item) {
                let v = ins[e.left as usize] + ins[e.right as usize] + self.weight(e);
                if v == NEG_INF {
                    continue;
                }
                let flow = g * (v - ins[item]).exp();
                grad[e.left as usize] += flow;
                grad[e.right as usize] += flow;
                if e.arc != NONE {
                    arc_grad[e.arc as usize] += flow;
                }
                if let (Some(sg), true) = (sib_grad.as_mut(), e.sib != NONE) {
                    sg[e.sib as usize] += flow;
                }
            }
        }
        (arc_grad, sib_grad)
    }

    /// Log-space Outside pass; marginals follow from inside and outside
    /// scores of every edge.
    fn outside_marginals(&self, ins: &[f64]) -> (Vec<f64>, Option<Vec<f64>>) {
        let dim = self.graph.dim;
        let log_z = ins[self.goal as usize];
        let mut out = vec![NEG_INF; self.items()];
        let mut arc_marg = vec![0.0; dim * dim];
        let mut sib_marg = self.sib.map(|_| vec![0.0; dim * dim * dim]);
        out[self.goal as usize] = 0.0;
        for item in (0..self.items()).rev() {
            let o = out[item];
            if o == NEG_INF {
                continue;
            }
            for e in self.edges(item) {
                let (l, r) = (e.left as usize, e.right as usize);
                let w = self.weight(e);
                out[l] = log_add_exp(out[l], o + ins[r] + w);
                out[r] = log_add_exp(out[r], o + ins[l] + w);
                let p = (o + ins[l] + ins[r] + w - log_z).exp();
                if e.arc != NONE {
                    arc_marg[e.arc as usize] += p;
                }
                if let (Some(sm), true) = (sib_marg.as_mut(), e.sib != NONE) {
                    sm[e.sib as usize] += p;
                }
            }
        }
        (arc_marg, sib_marg)
    }

    /// Best derivation with deterministic tie-breaking: among equal scores,
    /// prefer the smaller head at the leftmost modifier where heads differ.
    fn viterbi(&self) -> Option<Vec<usize>> {
        let mut best = vec![NEG_INF; self.items()];
        let mut back = vec![NONE; self.items()];
        for item in 0..self.items() {
            if self.graph.axiom[item] {
                best[item] = 0.0;
                continue;
            }
            let lo = self.graph.offsets[item];
            for (offset, e) in self.edges(item).iter().enumerate() {
                let v = best[e.left as usize] + best[e.right as usize] + self.weight(e);
                if v == NEG_INF {
                    continue;
                }
                let edge_id = lo + offset as u32;
                if v > best[item] || (v == best[item] && self.lex_less(edge_id, back[item], &back))
                {
                    best[item] = v;
                    back[item] = edge_id;
                }
            }
        }
        if best[self.goal as usize] == NEG_INF {
            return None;
        }
        let dim = self.graph.dim;
        let mut heads = vec![0; dim];
        let mut arcs = Vec::with_capacity(dim);
        self.collect_arcs(back[self.goal as usize], &back, &mut arcs);
        for (m, h) in arcs {
            heads[m] = h;
        }
        Some(heads)
    }

    fn collect_arcs(&self, edge_id: u32, back: &[u32], arcs: &mut Vec<(usize, usize)>) {
        let e = self.graph.edges[edge_id as usize];
        if e.arc != NONE {
            let idx = e.arc as usize;
            arcs.push((idx % self.graph.dim, idx / self.graph.dim));
        }
        for item in [e.left, e.right] {
            if !self.graph.axiom[item as usize] {
                self.collect_arcs(back[item as usize], back, arcs);
            }
        }
    }

    fn lex_less(&self, candidate: u32, incumbent: u32, back: &[u32]) -> bool {
        if incumbent == NONE {
            return true;
        }
        let mut a = Vec::new();
        let mut b = Vec::new();
        self.collect_arcs(candidate, back, &mut a);
        self.collect_arcs(incumbent, back, &mut b);
        a.sort_unstable();
        b.sort_unstable();
        debug_assert!(a.iter().map(|x| x.0).eq(b.iter().map(|x| x.0)));
        a < b
    }
}

fn roots_for(n: usize, root: Option<usize>) -> Vec<usize> {
    match root {
        Some(p) if (1..=n).contains(&p) => vec![p],
        Some(_) => Vec::new(),
        None => (1..=n).collect(),
    }
}

fn sib_table(scores: &ScoreTables, order: Order) -> Result<Option<&[f64]>, ChartError> {
    match order {
        Order::First => Ok(None),
        Order::Second => scores.sibs().map(Some).ok_or(ChartError::MissingSiblings),
    }
}

/// Log partition function over single-root projective trees, optionally
/// restricted to trees whose root child is `root`.
pub fn inside(scores: &ScoreTables, order: Order, root: Option<usize>) -> Result<f64, ChartError> {
    let n = scores.len();
    let chart = Chart::new(
        n,
        order,
        &roots_for(n, root),
        None,
        scores.arcs(),
        sib_table(scores, order)?,
    );
    let log_z = chart.inside()[chart.goal as usize];
    if log_z == NEG_INF {
        return Err(ChartError::AllMasked);
    }
    Ok(log_z)
}

pub fn inside1(scores: &ScoreTables, root: Option<usize>) -> Result<f64, ChartError> {
    inside(scores, Order::First, root)
}

pub fn inside2(scores: &ScoreTables, root: Option<usize>) -> Result<f64, ChartError> {
    inside(scores, Order::Second, root)
}

/// Arc scores of the constrained numerator: arcs outside the forest are
/// masked and label log-probabilities of arcs out of 0 and the predicate are
/// folded in.
pub fn numerator_arcs(scores: &ScoreTables, c: &ForestConstraints) -> Result<Vec<f64>, ChartError> {
    let n = scores.len();
    if c.len() != n {
        return Err(ChartError::LengthMismatch {
            tables: n,
            constraints: c.len(),
        });
    }
    let p = c.predicate();
    let dim = n + 1;
    let part = &c.partition;
    let mut arcs = vec![NEG_INF; dim * dim];
    let label = |h: usize, m: usize, l: &ArcLabel| -> Result<f64, ChartError> {
        scores.labels().map_or(Ok(0.0), |t| t.log_prob(h, m, l))
    };
    arcs[p] = scores.arc(0, p) + label(0, p, &ArcLabel::Prd)?;
    for m in (1..=n).filter(|&m| m != p) {
        let segment = part.segment_at(m);
        let span = segment.span;
        let headword_ok = match (&segment.kind, c.variant) {
            (SegmentKind::Argument(_), Variant::First | Variant::Flat) => m == span.start,
            (SegmentKind::Argument(_), Variant::Last) => m == span.end,
            _ => true,
        };
        if headword_ok {
            arcs[p * dim + m] = scores.arc(p, m) + label(p, m, &c.gold_label(m))?;
        }
        for h in span.start..=span.end {
            if h == m {
                continue;
            }
            let ok = match (&segment.kind, c.variant) {
                (SegmentKind::Argument(_), Variant::Flat) => h == span.start,
                (SegmentKind::NonArgument, Variant::Flat) => false,
                _ => true,
            };
            if ok {
                arcs[h * dim + m] = scores.arc(h, m);
            }
        }
    }
    Ok(arcs)
}

fn constrained_chart<'s>(
    scores: &'s ScoreTables,
    order: Order,
    c: &ForestConstraints,
    arcs: &'s [f64],
    fault: Fault,
) -> Result<Chart<'s>, ChartError> {
    let mask = PredicateMask::new(c, fault);
    Ok(Chart::new(
        scores.len(),
        order,
        &[c.predicate()],
        Some(&mask),
        arcs,
        sib_table(scores, order)?,
    ))
}

/// Log numerator: log-sum over the forest `T_p` of exp(tree score + label
/// log-probabilities of arcs out of 0 and the predicate).
pub fn inside_constrained(
    scores: &ScoreTables,
    order: Order,
    c: &ForestConstraints,
) -> Result<f64, ChartError> {
    inside_constrained_with_fault(scores, order, c, Fault::None)
}

#[doc(hidden)]
pub fn inside_constrained_with_fault(
    scores: &ScoreTables,
    order: Order,
    c: &ForestConstraints,
    fault: Fault,
) -> Result<f64, ChartError> {
    let arcs = numerator_arcs(scores, c)?;
    let chart = constrained_chart(scores, order, c, &arcs, fault)?;
    let value = chart.inside()[chart.goal as usize];
    if value == NEG_INF {
        return Err(ChartError::EmptyForest);
    }
    Ok(value)
}

pub fn inside1_constrained(scores: &ScoreTables, c: &ForestConstraints) -> Result<f64, ChartError> {
    inside_constrained(scores, Order::First, c)
}

pub fn inside2_constrained(scores: &ScoreTables, c: &ForestConstraints) -> Result<f64, ChartError> {
    inside_constrained(scores, Order::Second, c)
}

/// Which algorithm computes the marginals.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MarginalMethod {
    /// Reverse-mode differentiation of the inside recursion.
    #[default]
    Adjoint,
    /// Explicit log-space Outside pass.
    Outside,
}

/// Log partition and marginals, unconstrained or over the forest of `c`.
///
/// In the constrained case the marginals are derivatives with respect to the
/// folded numerator arcs, which equal the derivatives with respect to both
/// the raw arc scores and the folded label log-probabilities.
pub fn marginals(
    scores: &ScoreTables,
    order: Order,
    constraints: Option<&ForestConstraints>,
) -> Result<ChartResult, ChartError> {
    marginals_with(scores, order, constraints, MarginalMethod::Adjoint)
}

pub fn marginals_with(
    scores: &ScoreTables,
    order: Order,
    constraints: Option<&ForestConstraints>,
    method: MarginalMethod,
) -> Result<ChartResult, ChartError> {
    let n = scores.len();
    let numerator;
    let roots;
    let chart = match constraints {
        Some(c) => {
            numerator = numerator_arcs(scores, c)?;
            constrained_chart(scores, order, c, &numerator, Fault::None)?
        }
        None => {
            roots = roots_for(n, None);
            Chart::new(
                n,
                order,
                &roots,
                None,
                scores.arcs(),
                sib_table(scores, order)?,
            )
        }
    };
    let ins = chart.inside();
    let log_z = ins[chart.goal as usize];
    if log_z == NEG_INF {
        return Err(if constraints.is_some() {
            ChartError::EmptyForest
        } else {
            ChartError::AllMasked
        });
    }
    let (arc_marginals, sib_marginals) = match method {
        MarginalMethod::Adjoint => chart.adjoint(&ins),
        MarginalMethod::Outside => chart.outside_marginals(&ins),
    };
    Ok(ChartResult {
        n,
        log_z,
        arc_marginals,
        sib_marginals,
    })
}

/// Highest-scoring single-root projective tree, optionally with a fixed root
/// child. Returns the head vector, or `None` if every tree is masked.
pub(crate) fn best_heads(
    scores: &ScoreTables,
    order: Order,
    root: Option<usize>,
) -> Result<Option<Vec<usize>>, ChartError> {
    let n = scores.len();
    let chart = Chart::new(
        n,
        order,
        &roots_for(n, root),
        None,
        scores.arcs(),
        sib_table(scores, order)?,
    );
    Ok(chart.viterbi())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn log_sum_exp_handles_infinities() {
        assert_eq!(log_sum_exp(&[]), NEG_INF);
        assert_eq!(log_sum_exp(&[NEG_INF, NEG_INF]), NEG_INF);
        assert_relative_eq!(log_sum_exp(&[0.0, 0.0]), 2f64.ln());
        assert_relative_eq!(log_sum_exp(&[1000.0, 1000.0]), 1000.0 + 2f64.ln());
        assert_eq!(log_add_exp(NEG_INF, 3.0), 3.0);
        assert_relative_eq!(log_add_exp(-1000.0, -1000.0), -1000.0 + 2f64.ln());
    }

    #[test]
    fn two_tokens_two_trees() {
        let scores = ScoreTables::zeros(2);
        assert_relative_eq!(inside1(&scores, None).unwrap(), 2f64.ln(), epsilon = 1e-12);
        let result = marginals(&scores, Order::First, None).unwrap();
        assert_relative_eq!(result.arc_marginal(0, 1), 0.5, epsilon = 1e-12);
        assert_relative_eq!(result.arc_marginal(2, 1), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn single_token() {
        let scores = ScoreTables::from_fn(1, |_, _| 0.7);
        assert_eq!(inside1(&scores, None).unwrap(), 0.7);
        assert_eq!(
            inside2(&scores.clone().with_zero_sibs(), Some(1)).unwrap(),
            0.7
        );
        assert_eq!(inside1(&scores, Some(2)), Err(ChartError::AllMasked));
    }

    #[test]
    fn three_tokens_seven_trees() {
        let scores = ScoreTables::zeros(3).with_zero_sibs();
        assert_relative_eq!(inside1(&scores, None).unwrap(), 7f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(inside2(&scores, None).unwrap(), 7f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn masked_root_is_all_masked() {
        let mut scores = ScoreTables::zeros(2);
        scores.set_arc(0, 1, NEG_INF);
        scores.set_arc(0, 2, NEG_INF);
        assert_eq!(inside1(&scores, None), Err(ChartError::AllMasked));
    }

    #[test]
    fn second_order_requires_siblings() {
        assert_eq!(
            inside2(&ScoreTables::zeros(3), None),
            Err(ChartError::MissingSiblings)
        );
    }

    #[test]
    fn tree_score_counts_adjacent_siblings() {
        // 2 has right children 3 and 4, left child 1; root child 2.
        let tree = DepTree::new(vec![0, 2, 0, 2, 2]).unwrap();
        let scores = ScoreTables::zeros(4).with_sib_fn(|h, s, m| (h * 100 + s * 10 + m) as f64);
        assert_eq!(scores.tree_score(&tree, Order::First), 0.0);
        assert_eq!(scores.tree_score(&tree, Order::Second), 234.0);
        // Left children 1 and 2 of head 3: closest is 2.
        let tree = DepTree::new(vec![0, 3, 3, 0]).unwrap();
        assert_eq!(scores.tree_score(&tree, Order::Second), 321.0);
    }

    #[test]
    fn label_table_normalizes() {
        let roles = Arc::new(RoleInventory::new(["A0", "A1"]).unwrap());
        let n = 2;
        let arc_logits: Vec<f64> = (0..(n + 1) * (n + 1) * 3)
            .map(|i| i as f64 * 0.37)
            .collect();
        let root_logits = vec![[0.3, -1.2]; n + 1];
        let table = LabelTable::from_logits(n, roles, &root_logits, &arc_logits);
        for h in 1..=n {
            for m in 1..=n {
                let total: f64 = table.arc_row(h, m).iter().map(|v| v.exp()).sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
        assert!((table.root_prd(1).exp() + table.root_null(1).exp() - 1.0).abs() < 1e-12);
        assert_eq!(table.label_index(&ArcLabel::Role("A1".into())), Ok(2));
        assert!(table.label_index(&ArcLabel::Role("A9".into())).is_err());
    }

    #[test]
    fn order_parsing() {
        assert_eq!("1".parse::<Order>(), Ok(Order::First));
        assert_eq!("second".parse::<Order>(), Ok(Order::Second));
        assert!("3".parse::<Order>().is_err());
    }
}
