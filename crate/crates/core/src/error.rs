use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing required column `{column}` in {kind} input")]
    MissingColumn { column: String, kind: String },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("degenerate class distribution for `{target}`: {yes} YES / {no} NO")]
    DegenerateClasses { target: String, yes: usize, no: usize },

    #[error("insufficient rows for split: need {needed} {class} rows, only {available} available (deficit {})", needed - available)]
    InsufficientRows {
        class: &'static str,
        needed: usize,
        available: usize,
    },

    #[error("impossible evidence: P(evidence) = 0")]
    ImpossibleEvidence,

    #[error("edges carry no chi-square annotation; prune first")]
    NotAnnotated,

    #[error("graph contains a cycle")]
    Cyclic,

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
