//! CoNLL-05 style props blocks: token, predicate lemma or `-`, then one
//! bracket column per frame. Blocks are separated by blank lines.

use std::io::{BufRead, Write};

use super::DataError;
use crate::types::{Argument, PredicateFrame, Sentence, SrlAnnotation};

const PREDICATE_LABEL: &str = "V";

struct Cell<'a> {
    opens: Vec<&'a str>,
    closes: usize,
}

fn parse_cell(cell: &str) -> Option<Cell<'_>> {
    let mut rest = cell;
    let mut opens = Vec::new();
    while let Some(tail) = rest.strip_prefix('(') {
        let end = tail.find(['(', '*', ')'])?;
        if end == 0 {
            return None;
        }
        opens.push(&tail[..end]);
        rest = &tail[end..];
    }
    let rest = rest.strip_prefix('*')?;
    if !rest.chars().all(|c| c == ')') {
        return None;
    }
    Some(Cell {
        opens,
        closes: rest.len(),
    })
}

/// Read every block. Block and line numbers in errors are 1-based.
pub fn read_props(reader: impl BufRead) -> Result<Vec<SrlAnnotation>, DataError> {
    let mut out = Vec::new();
    let mut block: Vec<(usize, String)> = Vec::new();
    let mut block_index = 0;
    let mut lines = reader.lines().enumerate();
    loop {
        let next = lines.next();
        let line = match next {
            Some((i, line)) => Some((i + 1, line?)),
            None => None,
        };
        match line {
            Some((no, text)) if !text.trim().is_empty() => block.push((no, text)),
            _ => {
                if !block.is_empty() {
                    block_index += 1;
                    out.push(parse_block(&block, block_index)?);
                    block.clear();
                }
                if line.is_none() {
                    return Ok(out);
                }
            }
        }
    }
}

fn parse_block(lines: &[(usize, String)], block: usize) -> Result<SrlAnnotation, DataError> {
    let rows: Vec<(usize, Vec<&str>)> = lines
        .iter()
        .map(|(no, text)| (*no, text.split_whitespace().collect()))
        .collect();
    let expected = rows[0].1.len();
    if expected < 2 {
        return Err(DataError::ColumnCountMismatch {
            block,
            line: rows[0].0,
            expected: 2,
            found: expected,
        });
    }
    for (line, cols) in &rows {
        if cols.len() != expected {
            return Err(DataError::ColumnCountMismatch {
                block,
                line: *line,
                expected,
                found: cols.len(),
            });
        }
    }
    let tokens: Vec<String> = rows.iter().map(|(_, c)| c[0].to_owned()).collect();
    let lemmas: Vec<String> = rows.iter().map(|(_, c)| c[1].to_owned()).collect();
    let mut frames = Vec::new();
    for column in 2..expected {
        let mut open: Option<(&str, usize)> = None;
        let mut predicate = None;
        let mut args = Vec::new();
        for (pos, (line, cols)) in rows.iter().enumerate() {
            let pos = pos + 1;
            let props = |message: String| DataError::Props {
                block,
                line: *line,
                message,
            };
            let cell = parse_cell(cols[column]).ok_or_else(|| {
                props(format!(
                    "malformed cell {:?} in column {}",
                    cols[column],
                    column + 1
                ))
            })?;
            let unbalanced = DataError::UnbalancedBrackets {
                block,
                line: *line,
                column: column + 1,
            };
            match cell.opens.as_slice() {
                [] => {}
                [label] if open.is_none() => open = Some((label, pos)),
                _ => return Err(unbalanced),
            }
            match cell.closes {
                0 => {}
                1 => {
                    let (label, start) = open.take().ok_or(unbalanced)?;
                    if label == PREDICATE_LABEL {
                        if start != pos || predicate.is_some() {
                            return Err(props(format!(
                                "column {} has a malformed predicate",
                                column + 1
                            )));
                        }
                        predicate = Some(pos);
                    } else {
                        args.push(Argument::new(start, pos, label));
                    }
                }
                _ => return Err(unbalanced),
            }
        }
        let last = rows.last().expect("blocks are non-empty").0;
        if open.is_some() {
            return Err(DataError::UnbalancedBrackets {
                block,
                line: last,
                column: column + 1,
            });
        }
        let predicate = predicate.ok_or_else(|| DataError::Props {
            block,
            line: last,
            message: format!("column {} has no predicate", column + 1),
        })?;
        frames.push(PredicateFrame::new(predicate, args));
    }
    // Lemmas that only restate predicate tokens carry no information.
    let predicates: Vec<usize> = frames.iter().map(|f| f.predicate).collect();
    let canonical = lemmas.iter().enumerate().all(|(i, lemma)| {
        if predicates.contains(&(i + 1)) {
            *lemma == tokens[i]
        } else {
            lemma == "-"
        }
    });
    let invalid = |message: String| DataError::Props {
        block,
        line: rows[0].0,
        message,
    };
    let sentence = if canonical {
        Sentence::new(tokens)
    } else {
        Sentence::with_lemmas(tokens, lemmas)
    }
    .map_err(|e| invalid(e.to_string()))?;
    SrlAnnotation::new(sentence, frames).map_err(|e| invalid(e.to_string()))
}

fn writable(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(char::is_whitespace)
}

/// Write aligned blocks: every column is left-aligned and padded to its
/// widest cell, columns are separated by two spaces, and each block ends
/// with a blank line.
pub fn write_props<'a>(
    mut writer: impl Write,
    corpus: impl IntoIterator<Item = &'a SrlAnnotation>,
) -> Result<(), DataError> {
    for (index, annotation) in corpus.into_iter().enumerate() {
        let unwritable = |message: String| DataError::Unwritable {
            sentence: index + 1,
            message,
        };
        let sentence = &annotation.sentence;
        let n = sentence.len();
        let mut columns: Vec<Vec<String>> = Vec::new();
        columns.push(sentence.tokens().to_vec());
        let predicates = annotation.predicates();
        columns.push(match sentence.lemmas() {
            Some(lemmas) => lemmas.to_vec(),
            None => (1..=n)
                .map(|i| {
                    if predicates.contains(&i) {
                        sentence.token(i).to_owned()
                    } else {
                        "-".to_owned()
                    }
                })
                .collect(),
        });
        if let Some(bad) = columns.iter().flatten().find(|c| !writable(c)) {
            return Err(unwritable(format!(
                "token or lemma {bad:?} cannot be written as a column"
            )));
        }
        for frame in annotation.frames() {
            let mut cells = vec!["*".to_owned(); n];
            let mut mark = |start: usize, end: usize, label: &str| {
                if start == end {
                    cells[start - 1] = format!("({label}*)");
                } else {
                    cells[start - 1] = format!("({label}*");
                    cells[end - 1] = "*)".to_owned();
                }
            };
            mark(frame.predicate, frame.predicate, PREDICATE_LABEL);
            for arg in frame.arguments() {
                let role = &arg.role;
                if role == PREDICATE_LABEL || !writable(role) || role.contains(['(', ')', '*']) {
                    return Err(unwritable(format!(
                        "role {role:?} cannot be written in brackets"
                    )));
                }
                mark(arg.span.start, arg.span.end, role);
            }
            columns.push(cells);
        }
        let widths: Vec<usize> = columns
            .iter()
            .map(|c| c.iter().map(|s| s.chars().count()).max().unwrap_or(0))
            .collect();
        for row in 0..n {
            let mut line = String::new();
            for (k, column) in columns.iter().enumerate() {
                let cell = &column[row];
                line.push_str(cell);
                if k + 1 < columns.len() {
                    let pad = widths[k] - cell.chars().count() + 2;
                    line.extend(std::iter::repeat_n(' ', pad));
                }
            }
            writeln!(writer, "{line}")?;
        }
        writeln!(writer)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const WANT_TO: &str = "\
They  -     (A0*)
want  want  (V*)
to    -     (A1*
do    -     *
more  -     *)
.     -     *

";

    #[test]
    fn reads_and_writes_want_to() {
        let corpus = read_props(WANT_TO.as_bytes()).unwrap();
        assert_eq!(corpus.len(), 1);
        let frame = &corpus[0].frames()[0];
        assert_eq!(frame.predicate, 2);
        assert_eq!(
            frame.arguments(),
            &[Argument::new(1, 1, "A0"), Argument::new(3, 5, "A1")]
        );
        assert!(corpus[0].sentence.lemmas().is_none());
        let mut out = Vec::new();
        write_props(&mut out, &corpus).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), WANT_TO);
    }

    #[test]
    fn all_star_column_has_no_arguments() {
        let corpus = read_props("a  -  *\nb  b  (V*)\n".as_bytes()).unwrap();
        assert!(corpus[0].frames()[0].arguments().is_empty());
    }

    #[test]
    fn reports_errors_with_positions() {
        match read_props("a - (A0*\nb b (V*)\n".as_bytes()) {
            Err(DataError::UnbalancedBrackets {
                block: 1,
                line: 2,
                column: 3,
            }) => {}
            other => panic!("{other:?}"),
        }
        match read_props("x - (V*)\n\na - *\nb b\n".as_bytes()) {
            Err(DataError::ColumnCountMismatch {
                block: 2,
                line: 4,
                expected: 3,
                found: 2,
            }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            read_props("a - *)\nb b (V*)\n".as_bytes()),
            Err(DataError::UnbalancedBrackets { line: 1, .. })
        ));
        assert!(matches!(
            read_props("a - (A0(A1*))\n".as_bytes()),
            Err(DataError::UnbalancedBrackets { .. })
        ));
        assert!(matches!(
            read_props("a - x\n".as_bytes()),
            Err(DataError::Props { .. })
        ));
        assert!(matches!(
            read_props("a - *\n".as_bytes()),
            Err(DataError::Props { .. })
        ));
    }

    #[test]
    fn keeps_informative_lemmas() {
        let text = "went  go  (V*)\nhome  -   (A1*)\n\n";
        let corpus = read_props(text.as_bytes()).unwrap();
        assert_eq!(corpus[0].sentence.lemmas().unwrap(), &["go", "-"]);
        let mut out = Vec::new();
        write_props(&mut out, &corpus).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }
}
