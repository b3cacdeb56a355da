//! SRL to tree conversion and tree to SRL recovery.
//!
//! A frame is converted into the set of trees `T_p` described declaratively by
//! [`is_valid_tree`]. The charts in [`crate::chart`] sum over the same set
//! with masked dynamic programs; the enumeration in [`enumerate_forest`] is
//! the reference for both.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::types::{
    partition, ArcLabel, Argument, DepTree, FrameError, PredicateFrame, Segment, SegmentKind,
    Sentence, SpanPartition,
};

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ConvertError {
    #[error(transparent)]
    Frame(#[from] FrameError),

    #[error("sentence length {n} exceeds the enumeration bound {bound}")]
    TooLarge { n: usize, bound: usize },

    #[error("malformed tree: {0}")]
    MalformedTree(String),
}

/// How argument-internal structure is realized in the training forest.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Any single-rooted projective subtree per argument.
    #[default]
    Latent,
    /// The first token of each argument is its headword.
    First,
    /// The last token of each argument is its headword.
    Last,
    /// Like `First`, with every other argument token attached to the
    /// headword and every non-argument token attached to the predicate.
    Flat,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Latent,
        Variant::First,
        Variant::Last,
        Variant::Flat,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Latent => "latent",
            Variant::First => "first",
            Variant::Last => "last",
            Variant::Flat => "flat",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "latent" => Ok(Variant::Latent),
            "first" => Ok(Variant::First),
            "last" => Ok(Variant::Last),
            "flat" => Ok(Variant::Flat),
            other => Err(format!("unknown variant `{other}`")),
        }
    }
}

/// A frame's span partition plus the forest variant.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ForestConstraints {
    pub partition: SpanPartition,
    pub variant: Variant,
}

impl ForestConstraints {
    pub fn new(
        sentence: &Sentence,
        frame: &PredicateFrame,
        variant: Variant,
    ) -> Result<Self, FrameError> {
        Ok(ForestConstraints {
            partition: partition(sentence, frame)?,
            variant,
        })
    }

    pub fn predicate(&self) -> usize {
        self.partition.predicate
    }

    /// Sentence length.
    pub fn len(&self) -> usize {
        self.partition.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partition.is_empty()
    }

    pub fn segment_at(&self, pos: usize) -> &Segment {
        self.partition.segment_at(pos)
    }

    /// Label of the arc from the predicate to a headword at `pos`.
    pub fn gold_label(&self, pos: usize) -> ArcLabel {
        match &self.segment_at(pos).kind {
            SegmentKind::Argument(role) => ArcLabel::Role(role.clone()),
            SegmentKind::NonArgument => ArcLabel::Null,
            SegmentKind::Predicate => ArcLabel::Prd,
        }
    }
}

/// Declarative membership test for `T_p`.
pub fn is_valid_tree(tree: &DepTree, c: &ForestConstraints) -> bool {
    let n = c.len();
    let p = c.predicate();
    if tree.len() != n {
        return false;
    }
    // (a) 0 -> p is the only arc out of the root.
    if tree.head(p) != 0 || (1..=n).any(|m| m != p && tree.head(m) == 0) {
        return false;
    }
    // (b) everything else descends from p.
    if !(1..=n).all(|m| tree.dominates(p, m)) {
        return false;
    }
    // (c) arcs below the predicate stay inside one segment.
    for m in 1..=n {
        let h = tree.head(m);
        if h != 0 && h != p && c.partition.segment_index(h) != c.partition.segment_index(m) {
            return false;
        }
    }
    for segment in c.partition.segments() {
        let span = segment.span;
        let roots: Vec<usize> = (span.start..=span.end)
            .filter(|&m| tree.head(m) == p)
            .collect();
        match &segment.kind {
            SegmentKind::Predicate => {}
            SegmentKind::Argument(_) => {
                // (d) a single headword whose subtree is exactly the span.
                let [root] = roots[..] else { return false };
                if tree.yield_span(root) != span {
                    return false;
                }
                // (f) headword position and flatness.
                let ok = match c.variant {
                    Variant::Latent => true,
                    Variant::First => root == span.start,
                    Variant::Last => root == span.end,
                    Variant::Flat => {
                        root == span.start
                            && (span.start + 1..=span.end).all(|m| tree.head(m) == root)
                    }
                };
                if !ok {
                    return false;
                }
            }
            SegmentKind::NonArgument => {
                // (e) any number of roots; flat forests attach every token to p.
                if c.variant == Variant::Flat && roots.len() != span.len() {
                    return false;
                }
            }
        }
    }
    true
}

/// Default bound on the sentence length accepted by [`enumerate_forest`].
pub const ENUMERATION_BOUND: usize = 10;

/// All trees of `T_p`, by filtering every root-constrained projective tree.
#[cfg(feature = "oracle")]
pub fn enumerate_forest(c: &ForestConstraints, bound: usize) -> Result<Vec<DepTree>, ConvertError> {
    let n = c.len();
    if n > bound {
        return Err(ConvertError::TooLarge { n, bound });
    }
    let mut trees = Vec::new();
    crate::oracle::TreeIterator::new(n)
        .with_root(c.predicate())
        .visit(|heads| {
            let tree = DepTree::from_heads_unchecked(heads.to_vec());
            if is_valid_tree(&tree, c) {
                trees.push(tree);
            }
        });
    Ok(trees)
}

/// Canonical member of `T_p`: every argument headed by its first token with
/// the rest of the span attached to it, every non-argument token attached to
/// the predicate. The tree is labeled.
pub fn flat_realization(c: &ForestConstraints) -> DepTree {
    let n = c.len();
    let p = c.predicate();
    let mut heads = vec![0; n + 1];
    let mut labels = vec![None; n + 1];
    labels[p] = Some(ArcLabel::Prd);
    for segment in c.partition.segments() {
        let span = segment.span;
        match &segment.kind {
            SegmentKind::Predicate => {}
            SegmentKind::Argument(role) => {
                heads[span.start] = p;
                labels[span.start] = Some(ArcLabel::Role(role.clone()));
                for m in span.start + 1..=span.end {
                    heads[m] = span.start;
                }
            }
            SegmentKind::NonArgument => {
                for m in span.start..=span.end {
                    heads[m] = p;
                    labels[m] = Some(ArcLabel::Null);
                }
            }
        }
    }
    DepTree::from_heads_unchecked(heads)
        .with_labels(labels)
        .expect("label vector has the tree's length")
}

/// Label a member of `T_p` with its gold labels: PRD on the root arc, the
/// segment's label on every arc out of the predicate, nothing elsewhere.
pub fn label_forest_tree(tree: &DepTree, c: &ForestConstraints) -> DepTree {
    let p = c.predicate();
    let labels = (0..=tree.len())
        .map(|m| match m {
            0 => None,
            m if m == p => Some(ArcLabel::Prd),
            m if tree.heads()[m] == p => Some(c.gold_label(m)),
            _ => None,
        })
        .collect();
    DepTree::from_heads_unchecked(tree.heads().to_vec())
        .with_labels(labels)
        .expect("label vector has the tree's length")
}

fn check_rooted_at(tree: &DepTree, p: usize) -> Result<(), ConvertError> {
    let n = tree.len();
    if p == 0 || p > n {
        return Err(ConvertError::MalformedTree(format!(
            "predicate {p} is outside the tree of length {n}"
        )));
    }
    if tree.head(p) != 0 {
        return Err(ConvertError::MalformedTree(format!(
            "predicate {p} is not attached to the root"
        )));
    }
    if let Some(m) = (1..=n).find(|&m| m != p && tree.head(m) == 0) {
        return Err(ConvertError::MalformedTree(format!(
            "token {m} is a second child of the root"
        )));
    }
    Ok(())
}

/// Children of `p` with their labels, failing on missing or reserved labels.
fn labeled_children(tree: &DepTree, p: usize) -> Result<Vec<(usize, &ArcLabel)>, ConvertError> {
    check_rooted_at(tree, p)?;
    tree.children(p)
        .into_iter()
        .map(|h| match tree.label(h) {
            None => Err(ConvertError::MalformedTree(format!(
                "arc {p} -> {h} has no label"
            ))),
            Some(ArcLabel::Prd) => Err(ConvertError::MalformedTree(format!(
                "arc {p} -> {h} is labeled PRD"
            ))),
            Some(label) => Ok((h, label)),
        })
        .collect()
}

/// Collapse the labeled subtrees under `p` into argument spans.
pub fn recover_frame(tree: &DepTree, p: usize) -> Result<PredicateFrame, ConvertError> {
    let arguments = labeled_children(tree, p)?
        .into_iter()
        .filter_map(|(h, label)| match label {
            ArcLabel::Role(role) => {
                let span = tree.yield_span(h);
                Some(Argument::new(span.start, span.end, role.clone()))
            }
            _ => None,
        })
        .collect();
    Ok(PredicateFrame::new(p, arguments))
}

/// Predicate to headword dependencies `(p, h, role)` of a decoded tree.
pub fn headword_dependencies(
    tree: &DepTree,
    p: usize,
) -> Result<Vec<(usize, usize, String)>, ConvertError> {
    Ok(labeled_children(tree, p)?
        .into_iter()
        .filter_map(|(h, label)| match label {
            ArcLabel::Role(role) if h != p => Some((p, h, role.clone())),
            _ => None,
        })
        .collect())
}
