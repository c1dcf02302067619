use thiserror::Error;

/// Errors produced by dataset construction, training, filtering and the
/// exact oracle.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid partition: train size {train} must satisfy 1 <= train < {working_set}")]
    InvalidPartition { train: usize, working_set: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("degenerate training set: fewer than 2 distinct labels")]
    DegenerateTraining,

    #[error("non-finite feature value at row {row}, column {col}")]
    NonFiniteFeature { row: usize, col: usize },

    #[error("dimension mismatch: model expects {expected} features, input has {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("empty evaluation set")]
    EmptyEvaluation,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("enumeration budget exceeded: {required} train/test splits required, budget is {budget}")]
    BudgetExceeded { required: u128, budget: u64 },

    #[error("subset search cap exceeded: {size} instances, exhaustive search capped at {cap}")]
    SearchCapExceeded { size: usize, cap: usize },

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("filtering phase {phase} failed: {source}")]
    PhaseFailed {
        phase: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
