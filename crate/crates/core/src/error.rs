use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: missing input file")]
    MissingFile { path: PathBuf },
    #[error("{path}: missing required column {column:?}")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}, row {row}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        message: String,
    },
    #[error("{path}: worker {worker_id} judged unit {unit_id} twice (rows {first} and {second})")]
    DuplicateRow {
        path: PathBuf,
        worker_id: String,
        unit_id: String,
        first: usize,
        second: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),
    #[error("unit {unit_id}: token {token:?} is not in the vocabulary")]
    UnknownToken { unit_id: String, token: String },
    #[error("unit {unit_id}: unknown annotation {annotation_id:?}")]
    UnknownAnnotation {
        unit_id: String,
        annotation_id: String,
    },
    #[error("vectors of unit {unit_id} have mixed lengths ({expected} vs {found})")]
    MixedLengths {
        unit_id: String,
        expected: usize,
        found: usize,
    },
    #[error("{count} fatal violation(s) in the input, see {report}")]
    Validation { count: usize, report: PathBuf },
    #[error("threshold grid is empty")]
    EmptyGrid,
    #[error("{0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile { path }
        } else {
            Error::Io { path, source }
        }
    }
}
