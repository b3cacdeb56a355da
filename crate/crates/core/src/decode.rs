//! Predicate identification, 1-best Eisner decoding and frame recovery.

use thiserror::Error;

use crate::chart::{best_heads, ChartError, LabelTable, Order, ScoreTables, NEG_INF};
use crate::convert::{recover_frame, ConvertError};
use crate::types::{ArcLabel, DepTree, FrameError, PredicateFrame, Sentence, SrlAnnotation};

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("no tree has the root arc 0 -> {0}")]
    Infeasible(usize),

    #[error("score tables cover {tables} tokens but the sentence has {sentence}")]
    LengthMismatch { tables: usize, sentence: usize },

    #[error("gold predicate {0} is outside the sentence or repeated")]
    BadGoldPredicate(usize),

    #[error("decoding requires label scores")]
    MissingLabels,

    #[error(transparent)]
    Chart(#[from] ChartError),

    #[error(transparent)]
    Convert(#[from] ConvertError),

    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// Where predicates come from.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum PredicateMode {
    /// Root-arc label classification.
    #[default]
    Predict,
    /// Given positions; every other root arc is masked.
    Gold(Vec<usize>),
}

/// Deterministic tie-breaking rules.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TieBreak {
    /// Trees: smaller head at the leftmost differing modifier.
    /// Labels: lowest label index (NULL first, then inventory order).
    #[default]
    SmallestIndex,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DecodeConfig {
    pub order: Order,
    pub predicate_mode: PredicateMode,
    pub tie_break: TieBreak,
}

/// Positions whose root arc prefers PRD over NULL; ties go to NULL.
pub fn predict_predicates(labels: &LabelTable) -> Vec<usize> {
    (1..=labels.len())
        .filter(|&j| labels.root_prd(j) > labels.root_null(j))
        .collect()
}

/// Best tree rooted at `p` and its score recomputed from the tree.
pub fn eisner_decode(
    scores: &ScoreTables,
    p: usize,
    order: Order,
) -> Result<(DepTree, f64), DecodeError> {
    if p == 0 || p > scores.len() || scores.arc(0, p) == NEG_INF {
        return Err(DecodeError::Infeasible(p));
    }
    let heads = best_heads(scores, order, Some(p))?.ok_or(DecodeError::Infeasible(p))?;
    let tree = DepTree::from_heads_unchecked(heads);
    let score = scores.tree_score(&tree, order);
    Ok((tree, score))
}

/// Best single-root tree without a fixed root child.
pub fn decode_full_tree(scores: &ScoreTables, order: Order) -> Result<(DepTree, f64), DecodeError> {
    let heads = best_heads(scores, order, None)?.ok_or(ChartError::AllMasked)?;
    let tree = DepTree::from_heads_unchecked(heads);
    let score = scores.tree_score(&tree, order);
    Ok((tree, score))
}

/// Label a tree decoded for predicate `p`: PRD on `0 -> p`, the best label
/// of `{NULL} ∪ R` on every arc out of `p`, nothing elsewhere.
pub fn assign_labels(tree: DepTree, p: usize, labels: &LabelTable) -> DepTree {
    let n = tree.len();
    let mut out = vec![None; n + 1];
    for m in 1..=n {
        let h = tree.head(m);
        if h == 0 && m == p {
            out[m] = Some(ArcLabel::Prd);
        } else if h == p {
            let row = labels.arc_row(p, m);
            // First maximum wins.
            let best = row
                .iter()
                .enumerate()
                .fold(0, |best, (k, &v)| if v > row[best] { k } else { best });
            out[m] = Some(labels.label_name(best));
        }
    }
    tree.with_labels(out)
        .expect("label vector has the tree's length")
}

/// Decode, label and recover the frame of one predicate.
pub fn decode_frame(
    scores: &ScoreTables,
    p: usize,
    order: Order,
) -> Result<(PredicateFrame, DepTree), DecodeError> {
    let labels = scores.labels().ok_or(DecodeError::MissingLabels)?;
    let (tree, _) = eisner_decode(scores, p, order)?;
    let tree = assign_labels(tree, p, labels);
    Ok((recover_frame(&tree, p)?, tree))
}

/// Full SRL parse of one sentence.
pub fn parse(
    sentence: &Sentence,
    scores: &ScoreTables,
    config: &DecodeConfig,
) -> Result<SrlAnnotation, DecodeError> {
    let n = sentence.len();
    if scores.len() != n {
        return Err(DecodeError::LengthMismatch {
            tables: scores.len(),
            sentence: n,
        });
    }
    let labels = scores.labels().ok_or(DecodeError::MissingLabels)?;
    let predicates = match &config.predicate_mode {
        PredicateMode::Predict => predict_predicates(labels),
        PredicateMode::Gold(list) => {
            let mut sorted = list.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != list.len() {
                return Err(DecodeError::BadGoldPredicate(list[0]));
            }
            if let Some(&bad) = sorted.iter().find(|&&p| p == 0 || p > n) {
                return Err(DecodeError::BadGoldPredicate(bad));
            }
            sorted
        }
    };
    let masked;
    let scores = match &config.predicate_mode {
        PredicateMode::Predict => scores,
        PredicateMode::Gold(_) => {
            let mut copy = scores.clone();
            for j in (1..=n).filter(|j| !predicates.contains(j)) {
                copy.set_arc(0, j, NEG_INF);
            }
            masked = copy;
            &masked
        }
    };
    let frames = predicates
        .into_iter()
        .map(|p| decode_frame(scores, p, config.order).map(|(frame, _)| frame))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SrlAnnotation::new(sentence.clone(), frames)?)
}
