use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::DataError;
use crate::types::{Argument, PredicateFrame, Sentence, SrlAnnotation};

#[derive(Serialize, Deserialize)]
struct Record {
    tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lemmas: Option<Vec<String>>,
    #[serde(default)]
    frames: Vec<FrameRecord>,
}

#[derive(Serialize, Deserialize)]
pub(super) struct FrameRecord {
    pub predicate: usize,
    #[serde(default)]
    pub args: Vec<ArgRecord>,
}

#[derive(Serialize, Deserialize)]
pub(super) struct ArgRecord {
    pub start: usize,
    pub end: usize,
    pub role: String,
}

pub(super) fn frame_record(frame: &PredicateFrame) -> FrameRecord {
    FrameRecord {
        predicate: frame.predicate,
        args: frame
            .arguments()
            .iter()
            .map(|a| ArgRecord {
                start: a.span.start,
                end: a.span.end,
                role: a.role.clone(),
            })
            .collect(),
    }
}

pub(super) fn frame_from_record(record: FrameRecord) -> PredicateFrame {
    PredicateFrame::new(
        record.predicate,
        record
            .args
            .into_iter()
            .map(|a| Argument::new(a.start, a.end, a.role))
            .collect(),
    )
}

/// Parse one JSONL record; `line` is used for error messages only.
pub fn parse_jsonl_line(text: &str, line: usize) -> Result<SrlAnnotation, DataError> {
    let schema = |message: String| DataError::Schema { line, message };
    let record: Record = serde_json::from_str(text).map_err(|e| schema(e.to_string()))?;
    let sentence = match record.lemmas {
        Some(lemmas) => Sentence::with_lemmas(record.tokens, lemmas),
        None => Sentence::new(record.tokens),
    }
    .map_err(|e| schema(e.to_string()))?;
    let frames = record.frames.into_iter().map(frame_from_record).collect();
    SrlAnnotation::new(sentence, frames).map_err(|e| schema(e.to_string()))
}

pub fn to_jsonl_line(annotation: &SrlAnnotation) -> String {
    let record = Record {
        tokens: annotation.sentence.tokens().to_vec(),
        lemmas: annotation.sentence.lemmas().map(<[String]>::to_vec),
        frames: annotation.frames().iter().map(frame_record).collect(),
    };
    serde_json::to_string(&record).expect("records serialize")
}

/// Read every record; blank lines are skipped. Line numbers are 1-based.
pub fn read_jsonl(reader: impl BufRead) -> Result<Vec<SrlAnnotation>, DataError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_jsonl_line(&line, i + 1)?);
    }
    Ok(out)
}

pub fn write_jsonl<'a>(
    mut writer: impl Write,
    corpus: impl IntoIterator<Item = &'a SrlAnnotation>,
) -> Result<(), DataError> {
    for annotation in corpus {
        writeln!(writer, "{}", to_jsonl_line(annotation))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const WANT_TO: &str = r#"{"tokens":["They","want","to","do","more","."],"frames":[{"predicate":2,"args":[{"start":1,"end":1,"role":"A0"},{"start":3,"end":5,"role":"A1"}]}]}"#;

    #[test]
    fn reads_want_to_record() {
        let a = parse_jsonl_line(WANT_TO, 1).unwrap();
        assert_eq!(a.frames().len(), 1);
        let f = &a.frames()[0];
        assert_eq!(f.predicate, 2);
        assert_eq!(
            f.arguments(),
            &[Argument::new(1, 1, "A0"), Argument::new(3, 5, "A1")]
        );
        assert_eq!(to_jsonl_line(&a), WANT_TO);
    }

    #[test]
    fn empty_frames_and_errors() {
        let a = parse_jsonl_line(r#"{"tokens":["x"],"frames":[]}"#, 1).unwrap();
        assert!(a.frames().is_empty());
        let input =
            format!("{WANT_TO}\n\n{{\"tokens\":[\"a\"],\"frames\":[{{\"predicate\":3}}]}}\n");
        match read_jsonl(input.as_bytes()) {
            Err(DataError::Schema { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_jsonl_line("{", 7),
            Err(DataError::Schema { line: 7, .. })
        ));
        assert!(parse_jsonl_line(r#"{"tokens":[]}"#, 1).is_err());
        let overlapping = r#"{"tokens":["a","b","c"],"frames":[{"predicate":1,"args":[{"start":2,"end":3,"role":"A0"},{"start":3,"end":3,"role":"A1"}]}]}"#;
        assert!(parse_jsonl_line(overlapping, 1).is_err());
    }

    #[test]
    fn lemmas_round_trip() {
        let line = r#"{"tokens":["went"],"lemmas":["go"],"frames":[{"predicate":1,"args":[]}]}"#;
        assert_eq!(to_jsonl_line(&parse_jsonl_line(line, 1).unwrap()), line);
    }
}
