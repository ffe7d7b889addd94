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

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("byte offset {offset}: {message}")]
    ParseAt { offset: usize, message: String },

    /// Every unknown error-type label in a file, as (line, label).
    #[error("unknown error-type labels: {}", format_labels(.0))]
    UnknownLabels(Vec<(usize, String)>),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported schema `{found}` (this build reads `{expected}`)")]
    Version { found: String, expected: String },

    #[error("entity tagger failed: {0}")]
    Tagging(String),

    #[error(transparent)]
    Scorer(#[from] ScorerError),

    #[error("paraphrase provider failed: {0}")]
    Provider(String),

    #[error("no score for model `{model_id}` on metric `{metric}`")]
    MissingScore { model_id: String, metric: String },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),
}

/// Failures talking to a scorer. `Unavailable` aborts a run; everything else
/// is recorded against the affected pairs.
#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("scorer unavailable: {0}")]
    Unavailable(String),

    #[error("scorer protocol violation: {0}")]
    Protocol(String),
}

fn format_labels(labels: &[(usize, String)]) -> String {
    labels
        .iter()
        .map(|(line, label)| format!("line {line} `{label}`"))
        .collect::<Vec<_>>()
        .join(", ")
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable identifier used in machine-readable error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } | Error::ParseAt { .. } | Error::UnknownLabels(_) => "parse",
            Error::Integrity(_) => "integrity",
            Error::Domain(_) => "domain",
            Error::Version { .. } => "version",
            Error::Tagging(_) => "tagging",
            Error::Scorer(ScorerError::Unavailable(_)) => "scorer_unavailable",
            Error::Scorer(ScorerError::Protocol(_)) => "scorer_protocol",
            Error::Provider(_) => "provider",
            Error::MissingScore { .. } => "missing_score",
            Error::UndefinedCorrelation(_) => "undefined_correlation",
        }
    }

    /// True for failures of an external service rather than of the input data.
    pub fn is_external(&self) -> bool {
        matches!(self, Error::Scorer(ScorerError::Unavailable(_)))
    }
}
