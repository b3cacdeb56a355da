//! Corpus I/O and evaluation.

mod eval;
mod jsonl;
mod props;
mod trees;

use thiserror::Error;

pub use eval::{evaluate, EvalReport};
pub use jsonl::{parse_jsonl_line, read_jsonl, to_jsonl_line, write_jsonl};
pub use props::{read_props, write_props};
pub use trees::{
    attachment_agreement, read_full_trees, read_tree_records, tree_record, write_full_trees,
    write_tree_records, FullTree, PredicateTree, SegmentRecord, TreeRecord,
};

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },

    #[error("block {block}, line {line}: unbalanced brackets in column {column}")]
    UnbalancedBrackets {
        block: usize,
        line: usize,
        column: usize,
    },

    #[error("block {block}, line {line}: expected {expected} columns, found {found}")]
    ColumnCountMismatch {
        block: usize,
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("block {block}, line {line}: {message}")]
    Props {
        block: usize,
        line: usize,
        message: String,
    },

    #[error("sentence {sentence}: {message}")]
    Alignment { sentence: usize, message: String },

    #[error("sentence {sentence}: {message}")]
    Unwritable { sentence: usize, message: String },
}
