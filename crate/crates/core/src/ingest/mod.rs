//! Tweet corpus ingestion.
//!
//! Input is line-delimited JSON, one record per line, with the field names
//! `id, author_id, created_at, text, ref_kind, ref_id, like_count,
//! view_count, place`. Ids may be JSON strings or unsigned integers;
//! `created_at` may be epoch milliseconds or an ISO-8601 string.

mod record;
mod stats;
mod text;

pub use record::{parse_corpus, parse_corpus_with, write_corpus, ParsedCorpus, RefKind, TweetRecord};
pub use stats::{corpus_stats, corpus_stats_with, CorpusStats, KindCounts};
pub use text::{preprocess_text, stopwords, CleanText};

use thiserror::Error;

/// What to do when a line fails to parse or validate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ErrorPolicy {
    /// Drop the record and count it.
    #[default]
    Skip,
    /// Stop at the first bad record.
    Abort,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecordErrorKind {
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error("empty id")]
    EmptyId,
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("dangling reference kind: {0} without ref_id")]
    DanglingReferenceKind(RefKind),
    #[error("original tweet carries ref_id {0}")]
    OriginalWithReference(String),
    #[error("invalid timestamp: {0}")]
    InvalidTimestamp(String),
}

/// A per-record failure, tagged with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {kind}")]
pub struct RecordError {
    pub line: usize,
    pub kind: RecordErrorKind,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Record(#[from] RecordError),
}
