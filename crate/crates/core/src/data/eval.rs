use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::DataError;
use crate::types::{PredicateFrame, SrlAnnotation};

/// Micro-averaged argument scores in percent.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Percent of gold predicates whose predicted argument set is exactly right.
    pub cm: f64,
    pub matched: usize,
    pub predicted: usize,
    pub gold: usize,
    pub gold_predicates: usize,
    pub complete: usize,
}

fn percent(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

impl EvalReport {
    fn from_counts(
        matched: usize,
        predicted: usize,
        gold: usize,
        gold_predicates: usize,
        complete: usize,
    ) -> Self {
        let precision = percent(matched, predicted);
        let recall = percent(matched, gold);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        EvalReport {
            precision,
            recall,
            f1,
            cm: percent(complete, gold_predicates),
            matched,
            predicted,
            gold,
            gold_predicates,
            complete,
        }
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "precision {:.2}", self.precision)?;
        writeln!(f, "recall    {:.2}", self.recall)?;
        writeln!(f, "f1        {:.2}", self.f1)?;
        writeln!(f, "cm        {:.2}", self.cm)?;
        write!(
            f,
            "matched {} predicted {} gold {} complete {}/{}",
            self.matched, self.predicted, self.gold, self.complete, self.gold_predicates
        )
    }
}

type Tuple<'a> = (usize, usize, usize, &'a str);

fn tuples(frames: &[PredicateFrame]) -> BTreeSet<Tuple<'_>> {
    frames
        .iter()
        .flat_map(|f| {
            f.arguments()
                .iter()
                .map(move |a| (f.predicate, a.span.start, a.span.end, a.role.as_str()))
        })
        .collect()
}

/// Score `pred` against `gold`, aligned by sentence order.
///
/// Arguments match on exact (predicate, span, role). A gold predicate is
/// complete when the prediction has a frame for it with exactly the gold
/// argument set.
pub fn evaluate(gold: &[SrlAnnotation], pred: &[SrlAnnotation]) -> Result<EvalReport, DataError> {
    if gold.len() != pred.len() {
        return Err(DataError::Alignment {
            sentence: gold.len().min(pred.len()) + 1,
            message: format!(
                "gold has {} sentences, prediction has {}",
                gold.len(),
                pred.len()
            ),
        });
    }
    let (mut matched, mut predicted, mut total, mut predicates, mut complete) = (0, 0, 0, 0, 0);
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.sentence.len() != p.sentence.len() {
            return Err(DataError::Alignment {
                sentence: i + 1,
                message: format!(
                    "gold has {} tokens, prediction has {}",
                    g.sentence.len(),
                    p.sentence.len()
                ),
            });
        }
        let gt = tuples(g.frames());
        let pt = tuples(p.frames());
        matched += gt.intersection(&pt).count();
        predicted += pt.len();
        total += gt.len();
        for frame in g.frames() {
            predicates += 1;
            if p.frame(frame.predicate)
                .is_some_and(|pf| pf.arguments() == frame.arguments())
            {
                complete += 1;
            }
        }
    }
    Ok(EvalReport::from_counts(
        matched, predicted, total, predicates, complete,
    ))
}
