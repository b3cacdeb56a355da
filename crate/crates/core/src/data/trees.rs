//! JSON-lines records of converted and induced trees.

use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::DataError;
use crate::convert::{flat_realization, recover_frame, ConvertError, ForestConstraints, Variant};
use crate::types::{ArcLabel, DepTree, SegmentKind, Sentence, SrlAnnotation};

/// One segment of the constraint descriptor.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub start: usize,
    pub end: usize,
    /// `ARG`, `NONARG` or `PRED`.
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<String>,
}

/// A labeled tree realizing one frame, with the segments that constrain it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateTree {
    pub predicate: usize,
    /// Heads of tokens `1..=n`.
    pub heads: Vec<usize>,
    /// Labels of tokens `1..=n`; `null` where the arc is unlabeled.
    pub labels: Vec<Option<String>>,
    #[serde(default)]
    pub segments: Vec<SegmentRecord>,
}

/// All converted trees of one sentence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeRecord {
    pub tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lemmas: Option<Vec<String>>,
    pub trees: Vec<PredicateTree>,
}

/// An unlabeled full tree, as produced by induction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FullTree {
    pub tokens: Vec<String>,
    pub heads: Vec<usize>,
}

/// Convert every frame of `annotation` to its flat realization.
pub fn tree_record(annotation: &SrlAnnotation) -> Result<TreeRecord, ConvertError> {
    let sentence = &annotation.sentence;
    let trees = annotation
        .frames()
        .iter()
        .map(|frame| {
            let c = ForestConstraints::new(sentence, frame, Variant::Latent)?;
            let tree = flat_realization(&c);
            let labels = tree.labels().expect("flat realizations are labeled");
            let segments = c
                .partition
                .segments()
                .iter()
                .map(|s| {
                    let (kind, role) = match &s.kind {
                        SegmentKind::Argument(role) => ("ARG", Some(role.clone())),
                        SegmentKind::NonArgument => ("NONARG", None),
                        SegmentKind::Predicate => ("PRED", None),
                    };
                    SegmentRecord {
                        start: s.span.start,
                        end: s.span.end,
                        kind: kind.to_owned(),
                        role,
                    }
                })
                .collect();
            Ok(PredicateTree {
                predicate: frame.predicate,
                heads: tree.heads()[1..].to_vec(),
                labels: labels[1..]
                    .iter()
                    .map(|l| l.as_ref().map(|l| l.to_string()))
                    .collect(),
                segments,
            })
        })
        .collect::<Result<_, ConvertError>>()?;
    Ok(TreeRecord {
        tokens: sentence.tokens().to_vec(),
        lemmas: sentence.lemmas().map(<[String]>::to_vec),
        trees,
    })
}

impl PredicateTree {
    pub fn tree(&self) -> Result<DepTree, String> {
        if self.labels.len() != self.heads.len() {
            return Err(format!(
                "{} labels for {} heads",
                self.labels.len(),
                self.heads.len()
            ));
        }
        let mut heads = vec![0];
        heads.extend_from_slice(&self.heads);
        let mut labels = vec![None];
        labels.extend(
            self.labels
                .iter()
                .map(|l| l.as_deref().map(ArcLabel::parse)),
        );
        DepTree::new(heads)
            .and_then(|t| t.with_labels(labels))
            .map_err(|e| e.to_string())
    }
}

impl TreeRecord {
    /// Recover the annotation the trees encode.
    pub fn to_annotation(&self) -> Result<SrlAnnotation, String> {
        let sentence = match &self.lemmas {
            Some(lemmas) => Sentence::with_lemmas(self.tokens.clone(), lemmas.clone()),
            None => Sentence::new(self.tokens.clone()),
        }
        .map_err(|e| e.to_string())?;
        let frames = self
            .trees
            .iter()
            .map(|t| {
                let tree = t.tree()?;
                if tree.len() != sentence.len() {
                    return Err(format!(
                        "tree of length {} for {} tokens",
                        tree.len(),
                        sentence.len()
                    ));
                }
                recover_frame(&tree, t.predicate).map_err(|e| e.to_string())
            })
            .collect::<Result<Vec<_>, String>>()?;
        SrlAnnotation::new(sentence, frames).map_err(|e| e.to_string())
    }
}

impl FullTree {
    pub fn tree(&self) -> Result<DepTree, String> {
        if self.heads.len() != self.tokens.len() {
            return Err(format!(
                "{} heads for {} tokens",
                self.heads.len(),
                self.tokens.len()
            ));
        }
        let mut heads = vec![0];
        heads.extend_from_slice(&self.heads);
        DepTree::new(heads).map_err(|e| e.to_string())
    }
}

/// Percent of tokens whose head in `pred` equals the head in `reference`.
pub fn attachment_agreement(pred: &[FullTree], reference: &[FullTree]) -> Result<f64, DataError> {
    if pred.len() != reference.len() {
        return Err(DataError::Alignment {
            sentence: pred.len().min(reference.len()) + 1,
            message: format!(
                "{} trees against {} reference trees",
                pred.len(),
                reference.len()
            ),
        });
    }
    let (mut matched, mut total) = (0, 0);
    for (i, (p, r)) in pred.iter().zip(reference).enumerate() {
        if p.heads.len() != r.heads.len() {
            return Err(DataError::Alignment {
                sentence: i + 1,
                message: format!(
                    "{} heads against {} reference heads",
                    p.heads.len(),
                    r.heads.len()
                ),
            });
        }
        matched += p.heads.iter().zip(&r.heads).filter(|(a, b)| a == b).count();
        total += p.heads.len();
    }
    Ok(if total == 0 {
        0.0
    } else {
        100.0 * matched as f64 / total as f64
    })
}

fn read_records<T: DeserializeOwned>(reader: impl BufRead) -> Result<Vec<T>, DataError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| DataError::Schema {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

fn write_records<'a, T: Serialize + 'a>(
    mut writer: impl Write,
    records: impl IntoIterator<Item = &'a T>,
) -> Result<(), DataError> {
    for r in records {
        writeln!(
            writer,
            "{}",
            serde_json::to_string(r).expect("records serialize")
        )?;
    }
    Ok(())
}

pub fn read_tree_records(reader: impl BufRead) -> Result<Vec<TreeRecord>, DataError> {
    read_records(reader)
}

pub fn write_tree_records<'a>(
    writer: impl Write,
    records: impl IntoIterator<Item = &'a TreeRecord>,
) -> Result<(), DataError> {
    write_records(writer, records)
}

pub fn read_full_trees(reader: impl BufRead) -> Result<Vec<FullTree>, DataError> {
    read_records(reader)
}

pub fn write_full_trees<'a>(
    writer: impl Write,
    records: impl IntoIterator<Item = &'a FullTree>,
) -> Result<(), DataError> {
    write_records(writer, records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::parse_jsonl_line;

    #[test]
    fn want_to_round_trip() {
        let line = r#"{"tokens":["They","want","to","do","more","."],"frames":[{"predicate":2,"args":[{"start":1,"end":1,"role":"A0"},{"start":3,"end":5,"role":"A1"}]}]}"#;
        let a = parse_jsonl_line(line, 1).unwrap();
        let record = tree_record(&a).unwrap();
        let t = &record.trees[0];
        assert_eq!(t.heads, vec![2, 0, 2, 3, 3, 2]);
        assert_eq!(t.labels[0].as_deref(), Some("A0"));
        assert_eq!(t.labels[1].as_deref(), Some("PRD"));
        assert_eq!(t.labels[3], None);
        assert_eq!(t.segments.len(), 4);
        assert_eq!(record.to_annotation().unwrap(), a);
    }

    #[test]
    fn agreement_counts_matching_heads() {
        let tree = |heads: Vec<usize>| FullTree {
            tokens: vec!["w".into(); heads.len()],
            heads,
        };
        let pred = [tree(vec![2, 0, 2, 3, 3, 2])];
        assert_eq!(attachment_agreement(&pred, &pred).unwrap(), 100.0);
        let reference = [tree(vec![2, 0, 2, 2, 4, 5])];
        assert_eq!(attachment_agreement(&pred, &reference).unwrap(), 50.0);
        assert!(attachment_agreement(&pred, &[]).is_err());
    }

    #[test]
    fn rejects_bad_trees() {
        let bad = TreeRecord {
            tokens: vec!["a".into(), "b".into()],
            lemmas: None,
            trees: vec![PredicateTree {
                predicate: 1,
                heads: vec![2, 1],
                labels: vec![None, None],
                segments: Vec::new(),
            }],
        };
        assert!(bad.to_annotation().is_err());
    }
}
