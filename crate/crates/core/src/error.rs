use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("BIF syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("variable `{0}` is not discrete")]
    UnsupportedVariable(String),
    #[error("variable `{0}` has no probability block")]
    MissingCpt(String),
    #[error("CPT of `{variable}` row {row} sums to {sum} (tolerance {tolerance})")]
    RowSum {
        variable: String,
        row: usize,
        sum: f64,
        tolerance: f64,
    },
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("cycle detected through variable `{0}`")]
    Cycle(String),
    #[error("invalid evidence: {0}")]
    InvalidEvidence(String),
    #[error("evidence has zero probability")]
    ZeroProbabilityEvidence,
    #[error("intermediate factor of {entries} entries exceeds cap {cap}")]
    FactorTooLarge { entries: usize, cap: usize },
    #[error("joint state space of {states} states exceeds enumeration guard {guard}")]
    StateSpaceTooLarge { states: u128, guard: u128 },
    #[error("Gibbs sampling needs strictly positive CPTs: `{0}` has a zero entry")]
    ZeroSupport(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("training diverged at epoch {epoch}: {message}")]
    Diverged { epoch: usize, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("alignment mismatch: {0}")]
    Alignment(String),
    #[error("no scoring units retained")]
    EmptySelection,
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
