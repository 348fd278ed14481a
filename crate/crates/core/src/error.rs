use std::path::PathBuf;

use thiserror::Error;

use crate::span::{AnswerType, Span};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("calibration data for system `{system}` ({answer_type}) has a single class; cannot fit")]
    SingleClass {
        system: String,
        answer_type: AnswerType,
    },

    #[error("calibration data contains a non-finite score")]
    NonFiniteScore,

    #[error("noisy-or needs scores in [0,1]; system `{system}` gave {value} for span {span} (missing logreg normalization?)")]
    NoisyOrDomain {
        system: String,
        span: Span,
        value: f64,
    },

    #[error("missing calibrator for system `{system}` ({answer_type})")]
    MissingCalibrator {
        system: String,
        answer_type: AnswerType,
    },

    #[error("split is empty")]
    EmptySplit,

    #[error("exhaustive search needs {evaluations} subset evaluations, over the budget of {budget}; truncate the pool (e.g. --pool-top-n 20) or force")]
    BudgetExceeded { evaluations: u128, budget: u128 },

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
