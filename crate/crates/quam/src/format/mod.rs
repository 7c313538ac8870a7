//! On-disk formats: the binary graph, TREC runs and qrels, and the small
//! tab-separated files around them.

mod graph;
mod trec;
mod tsv;

use std::io;
use std::path::{Path, PathBuf};

pub use graph::{
    decode_graph, encode_graph, load_graph, read_ids, save_graph, sidecar_path, write_ids,
};
pub use trec::{
    format_qrels, format_run, parse_qrels, parse_run, read_qrels, read_run, write_qrels, write_run,
    RunFile,
};
pub use tsv::{
    parse_corpus, read_corpus, read_queries, read_triples, write_corpus, write_histogram,
    write_queries, write_triples, Corpus,
};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{}: {error}", path.display())]
    Io { path: PathBuf, error: io::Error },
    /// Malformed binary content; `offset` is the byte position of the fault.
    #[error("{what} at byte offset {offset}")]
    Binary { offset: u64, what: String },
    /// Malformed text content; `line` is 1-based.
    #[error("line {line}: {what}")]
    Text { line: usize, what: String },
    #[error(transparent)]
    Core(#[from] quam_core::Error),
}

impl FormatError {
    pub(crate) fn io(path: &Path, error: io::Error) -> Self {
        FormatError::Io {
            path: path.to_path_buf(),
            error,
        }
    }

    pub(crate) fn text(line: usize, what: impl Into<String>) -> Self {
        FormatError::Text {
            line,
            what: what.into(),
        }
    }
}

pub type FormatResult<T> = Result<T, FormatError>;

pub(crate) fn read_text(path: &Path) -> FormatResult<String> {
    std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> FormatResult<()> {
    std::fs::write(path, bytes).map_err(|e| FormatError::io(path, e))
}
