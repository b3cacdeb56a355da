//! Brute-force reference implementations for small sentences.
//!
//! Trees are generated by recursively splitting intervals into blocks, which
//! shares nothing with the chart algorithms. Scores are recomputed from
//! scratch for every tree, including the label terms of constrained forests.

use thiserror::Error;

use crate::chart::{log_sum_exp, Order, ScoreTables, NEG_INF};
use crate::convert::{is_valid_tree, ForestConstraints};
use crate::types::{ArcLabel, DepTree};

/// Largest sentence the tree enumerator accepts.
pub const MAX_ENUMERATION: usize = 10;

/// Largest sentence the brute-force scorers accept.
pub const MAX_BRUTE: usize = 10;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("sentence length {n} exceeds the oracle bound {bound}")]
    TooLarge { n: usize, bound: usize },

    #[error("no tree satisfies the constraints")]
    Empty,

    #[error("role `{0}` is not in the label inventory")]
    UnknownRole(String),
}

#[derive(Clone, Copy, Debug)]
enum Task {
    /// Split `[a, b]` into consecutive subtrees whose roots attach to `parent`.
    Blocks(usize, usize, usize),
    /// One subtree over `[a, b]` whose root attaches to `parent`.
    Tree(usize, usize, usize),
}

/// Enumerates projective trees in which the root has exactly one child.
#[derive(Clone, Debug)]
pub struct TreeIterator<'c> {
    n: usize,
    root: Option<usize>,
    constraints: Option<&'c ForestConstraints>,
}

impl<'c> TreeIterator<'c> {
    pub fn new(n: usize) -> Self {
        TreeIterator {
            n,
            root: None,
            constraints: None,
        }
    }

    pub fn with_root(mut self, root: usize) -> Self {
        self.root = Some(root);
        self
    }

    /// Restrict to the forest of `c` (implies its root constraint).
    pub fn with_constraints(mut self, c: &'c ForestConstraints) -> Self {
        self.root = Some(c.predicate());
        self.constraints = Some(c);
        self
    }

    /// Call `f` with the head vector of every qualifying tree, exactly once each.
    pub fn visit(&self, mut f: impl FnMut(&[usize])) {
        let mut heads = vec![0; self.n + 1];
        let mut tasks = Vec::new();
        let constraints = self.constraints;
        let mut sink = |heads: &[usize]| match constraints {
            Some(c) => {
                let tree = DepTree::from_heads_unchecked(heads.to_vec());
                if is_valid_tree(&tree, c) {
                    f(heads);
                }
            }
            None => f(heads),
        };
        let roots: Vec<usize> = match self.root {
            Some(r) if (1..=self.n).contains(&r) => vec![r],
            Some(_) => Vec::new(),
            None => (1..=self.n).collect(),
        };
        for r in roots {
            heads[r] = 0;
            tasks.push(Task::Blocks(r + 1, self.n, r));
            tasks.push(Task::Blocks(1, r - 1, r));
            solve(&mut tasks, &mut heads, &mut sink);
            tasks.clear();
        }
    }

    pub fn count(&self) -> usize {
        let mut count = 0;
        self.visit(|_| count += 1);
        count
    }

    pub fn collect(&self) -> Vec<DepTree> {
        let mut trees = Vec::new();
        self.visit(|heads| trees.push(DepTree::from_heads_unchecked(heads.to_vec())));
        trees
    }
}

fn solve(tasks: &mut Vec<Task>, heads: &mut [usize], f: &mut dyn FnMut(&[usize])) {
    let Some(task) = tasks.pop() else {
        f(heads);
        return;
    };
    match task {
        Task::Blocks(a, b, parent) => {
            if a > b {
                solve(tasks, heads, f);
            } else {
                for end in a..=b {
                    tasks.push(Task::Blocks(end + 1, b, parent));
                    tasks.push(Task::Tree(a, end, parent));
                    solve(tasks, heads, f);
                    tasks.pop();
                    tasks.pop();
                }
            }
        }
        Task::Tree(a, b, parent) => {
            for r in a..=b {
                heads[r] = parent;
                tasks.push(Task::Blocks(r + 1, b, r));
                tasks.push(Task::Blocks(a, r - 1, r));
                solve(tasks, heads, f);
                tasks.pop();
                tasks.pop();
            }
        }
    }
    tasks.push(task);
}

/// All single-root projective trees over `n` tokens, optionally with a fixed
/// root child.
pub fn enumerate_trees(n: usize, root: Option<usize>) -> Result<Vec<DepTree>, OracleError> {
    if n > MAX_ENUMERATION {
        return Err(OracleError::TooLarge {
            n,
            bound: MAX_ENUMERATION,
        });
    }
    let mut it = TreeIterator::new(n);
    if let Some(r) = root {
        it = it.with_root(r);
    }
    Ok(it.collect())
}

/// Tree score recomputed literally from the arc and sibling tables.
pub fn oracle_tree_score(scores: &ScoreTables, heads: &[usize], order: Order) -> f64 {
    let n = heads.len() - 1;
    let mut total = 0.0;
    for m in 1..=n {
        total += scores.arc(heads[m], m);
    }
    if order == Order::Second {
        for h in 1..=n {
            // Right children outward from h, then left children outward.
            let mut prev = None;
            for m in h + 1..=n {
                if heads[m] == h {
                    if let Some(s) = prev {
                        total += scores.sib(h, s, m);
                    }
                    prev = Some(m);
                }
            }
            let mut prev = None;
            for m in (1..h).rev() {
                if heads[m] == h {
                    if let Some(s) = prev {
                        total += scores.sib(h, s, m);
                    }
                    prev = Some(m);
                }
            }
        }
    }
    total
}

/// Label term of a forest tree: PRD on the root arc, the segment's gold
/// label on every arc out of the predicate.
pub fn oracle_label_score(
    scores: &ScoreTables,
    heads: &[usize],
    c: &ForestConstraints,
) -> Result<f64, OracleError> {
    let Some(labels) = scores.labels() else {
        return Ok(0.0);
    };
    let p = c.predicate();
    let mut total = labels.root_prd(p);
    for m in 1..heads.len() {
        if heads[m] == p {
            let label = c.gold_label(m);
            let idx = match &label {
                ArcLabel::Null => 0,
                ArcLabel::Role(role) => {
                    labels
                        .roles()
                        .id(role)
                        .ok_or_else(|| OracleError::UnknownRole(role.clone()))?
                        + 1
                }
                ArcLabel::Prd => unreachable!("the predicate is not its own child"),
            };
            total += labels.arc_row(p, m)[idx];
        }
    }
    Ok(total)
}

fn check_size(n: usize) -> Result<(), OracleError> {
    if n > MAX_BRUTE {
        return Err(OracleError::TooLarge {
            n,
            bound: MAX_BRUTE,
        });
    }
    Ok(())
}

/// Score of every qualifying tree, including label terms when constrained.
fn scored_trees(
    scores: &ScoreTables,
    order: Order,
    root: Option<usize>,
    constraints: Option<&ForestConstraints>,
) -> Result<Vec<(Vec<usize>, f64)>, OracleError> {
    let n = scores.len();
    check_size(n)?;
    let mut it = TreeIterator::new(n);
    if let Some(r) = root {
        it = it.with_root(r);
    }
    if let Some(c) = constraints {
        it = it.with_constraints(c);
    }
    let mut out = Vec::new();
    let mut failure = None;
    it.visit(|heads| {
        let mut s = oracle_tree_score(scores, heads, order);
        if let Some(c) = constraints {
            match oracle_label_score(scores, heads, c) {
                Ok(l) => s += l,
                Err(e) => failure = Some(e),
            }
        }
        out.push((heads.to_vec(), s));
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// Exact log-sum over all (or root-constrained, or forest) trees.
pub fn brute_log_z(
    scores: &ScoreTables,
    order: Order,
    root: Option<usize>,
    constraints: Option<&ForestConstraints>,
) -> Result<f64, OracleError> {
    let values: Vec<f64> = scored_trees(scores, order, root, constraints)?
        .into_iter()
        .map(|(_, s)| s)
        .collect();
    Ok(log_sum_exp(&values))
}

/// Exact best tree; ties prefer the smaller head at the leftmost differing
/// modifier.
pub fn brute_best(
    scores: &ScoreTables,
    order: Order,
    root: Option<usize>,
    constraints: Option<&ForestConstraints>,
) -> Result<(DepTree, f64), OracleError> {
    let mut best: Option<(Vec<usize>, f64)> = None;
    for (heads, s) in scored_trees(scores, order, root, constraints)? {
        if s == NEG_INF {
            continue;
        }
        let better = match &best {
            None => true,
            Some((bh, bs)) => s > *bs || (s == *bs && heads < *bh),
        };
        if better {
            best = Some((heads, s));
        }
    }
    let (heads, s) = best.ok_or(OracleError::Empty)?;
    Ok((DepTree::from_heads_unchecked(heads), s))
}

/// Exact posterior marginals `(arc, sibling)` by enumeration. Arc marginals
/// are laid out `h * (n + 1) + m`, sibling marginals `(h * (n + 1) + s) * (n + 1) + m`.
pub fn brute_marginals(
    scores: &ScoreTables,
    order: Order,
    constraints: Option<&ForestConstraints>,
) -> Result<(Vec<f64>, Vec<f64>), OracleError> {
    let n = scores.len();
    let dim = n + 1;
    let trees = scored_trees(scores, order, None, constraints)?;
    let log_z = log_sum_exp(&trees.iter().map(|t| t.1).collect::<Vec<_>>());
    if log_z == NEG_INF {
        return Err(OracleError::Empty);
    }
    let mut arc = vec![0.0; dim * dim];
    let mut sib = vec![0.0; dim * dim * dim];
    for (heads, s) in &trees {
        let p = (s - log_z).exp();
        for m in 1..=n {
            arc[heads[m] * dim + m] += p;
        }
        for h in 1..=n {
            let right: Vec<usize> = (h + 1..=n).filter(|&m| heads[m] == h).collect();
            let left: Vec<usize> = (1..h).rev().filter(|&m| heads[m] == h).collect();
            for side in [right, left] {
                for pair in side.windows(2) {
                    sib[(h * dim + pair[0]) * dim + pair[1]] += p;
                }
            }
        }
    }
    Ok((arc, sib))
}
