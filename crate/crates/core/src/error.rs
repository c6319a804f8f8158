use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}: parse error at byte {offset} (line {line}, column {column}) in field `{field}`: {message}")]
    Parse {
        path: PathBuf,
        offset: usize,
        line: usize,
        column: usize,
        field: String,
        message: String,
    },

    #[error("dangling references: {0}")]
    Integrity(String),

    #[error("instance {instance_id}: {reason}")]
    Segmentation { instance_id: u64, reason: String },

    #[error("degenerate polygon with {vertices} vertices (at least 3 required)")]
    DegeneratePolygon { vertices: usize },

    #[error("run-length counts sum to {actual}, expected {expected}")]
    RleSum { expected: u64, actual: u64 },

    #[error("malformed compressed run-length string: {0}")]
    RleString(String),

    #[error("mask dimensions differ: {left_width}x{left_height} vs {right_width}x{right_height}")]
    DimensionMismatch {
        left_width: u32,
        left_height: u32,
        right_width: u32,
        right_height: u32,
    },

    #[error("overlap score is undefined for an empty QA-object mask")]
    EmptyQaMask,

    #[error("questions without annotation records: {question_ids:?}")]
    MissingAnnotations { question_ids: Vec<u64> },

    #[error("question {question_id} has {actual} answers, expected {expected}")]
    AnswerCount {
        question_id: u64,
        expected: usize,
        actual: usize,
    },

    #[error("{path}:{line}: {message}")]
    Vocabulary {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("missing instance masks for image {image_id}")]
    MissingMasks { image_id: u64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no (original, edit) prediction pairs to score")]
    EmptyPairSet,

    #[error("edits reference questions outside the subset: {edit_ids:?}")]
    DanglingEdit { edit_ids: Vec<String> },

    #[error("reports were computed over different pair sets")]
    PairUniverseMismatch,

    #[error("{path}:{line}: {message}")]
    Record {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl Error {
    /// Short stable label used by the command-line front end.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } | Error::Record { .. } | Error::RleString(_) => "parse",
            Error::Integrity(_)
            | Error::MissingAnnotations { .. }
            | Error::DanglingEdit { .. }
            | Error::MissingMasks { .. } => "integrity",
            Error::Segmentation { .. }
            | Error::DegeneratePolygon { .. }
            | Error::RleSum { .. }
            | Error::DimensionMismatch { .. }
            | Error::EmptyQaMask => "geometry",
            Error::AnswerCount { .. } => "answers",
            Error::Vocabulary { .. } => "vocabulary",
            Error::Config(_) => "config",
            Error::EmptyPairSet | Error::PairUniverseMismatch => "metrics",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Converts a positioned `serde_json` failure into [`Error::Parse`], resolving
/// the line/column pair to a byte offset within `text`.
pub(crate) fn parse_error(
    path: impl Into<PathBuf>,
    text: &str,
    err: serde_path_to_error::Error<serde_json::Error>,
) -> Error {
    let field = err.path().to_string();
    let inner = err.into_inner();
    let (line, column) = (inner.line(), inner.column());
    Error::Parse {
        path: path.into(),
        offset: byte_offset(text, line, column),
        line,
        column,
        field,
        message: inner.to_string(),
    }
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}
