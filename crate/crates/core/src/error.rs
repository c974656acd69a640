use std::time::Duration;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures raised while scoring rows with a model.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("failed to launch model process `{command}`: {source}")]
    Spawn {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error("process failure: model process exited with {status}; stderr: {stderr}")]
    ProcessFailure { status: String, stderr: String },
    #[error("short response: expected {expected} scores, got {got}")]
    ShortResponse { expected: usize, got: usize },
    #[error("malformed response on line {line}: {content:?}")]
    Malformed { line: usize, content: String },
    #[error("model process timed out after {0:?}")]
    Timeout(Duration),
    #[error("model returned {got} scores for a batch of {expected} rows")]
    OutputLength { expected: usize, got: usize },
    #[error("model expects {expected} features, batch has {got}")]
    Arity { expected: usize, got: usize },
    #[error("model returned non-finite score {value} for row {row}")]
    NonFinite { row: usize, value: f64 },
    #[error("scoring failed for batch of {rows} rows (fixed features {fixed:?}): {source}")]
    Batch {
        rows: usize,
        fixed: Vec<usize>,
        #[source]
        source: Box<ModelError>,
    },
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing value in column `{column}` at row {row}")]
    MissingValue { column: String, row: usize },
    #[error("duplicate name `{0}`")]
    DuplicateName(String),
    #[error("empty feature name at column {0}")]
    EmptyName(usize),
    #[error("dataset must have at least one row and one feature (got {rows} rows, {features} features)")]
    EmptyDataset { rows: usize, features: usize },
    #[error("ragged table: row {row} has {got} cells, expected {expected}")]
    Ragged { row: usize, expected: usize, got: usize },
    #[error("arity mismatch: expected {expected} values, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("unseen level `{level}` for categorical feature `{feature}`")]
    UnseenLevel { feature: String, level: String },
    #[error("non-numeric token `{token}` for numeric feature `{feature}`")]
    NotNumeric { feature: String, token: String },
    #[error("feature index {index} out of range for {p} features")]
    FeatureIndex { index: usize, p: usize },
    #[error("pair requires distinct features (got {0} twice)")]
    SamePair(usize),
    #[error("group features {0:?} overlap the conditioning history")]
    Overlap(Vec<usize>),
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),
    #[error("unknown target column `{0}`")]
    UnknownTarget(String),
    #[error("non-binary target: {0}")]
    NonBinaryTarget(String),
    #[error("singular design matrix (condition number {condition:e})")]
    Singular { condition: f64 },
    #[error("external models are not serializable (unsupported)")]
    Unsupported,
    #[error("model format error: {0}")]
    Format(String),
    #[error("sum identity violated: baseline {baseline} + attributions {sum} != prediction {prediction}")]
    SumIdentity {
        baseline: f64,
        sum: f64,
        prediction: f64,
    },
    #[error("invalid explanation: {0}")]
    Partition(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True when the failure originated in a model rather than in the inputs.
    pub fn is_model_failure(&self) -> bool {
        matches!(self, Error::Model(_))
    }
}
