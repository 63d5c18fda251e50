use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("row {0} of the adjacency has zero degree (missing self-loops?)")]
    ZeroDegree(usize),
    #[error("feature vector{} has zero variance", subject_suffix(*.subject))]
    DegenerateVector { subject: Option<usize> },
    #[error("kernel width sigma must be positive, got {0}")]
    NonPositiveSigma(f64),
    #[error("correlation at ({row}, {col}) is {value}, outside (-1, 1)")]
    OutOfRange { row: usize, col: usize, value: f64 },
    #[error("regularized normal matrix is numerically singular (pivot {pivot} at column {column})")]
    SingularSystem { column: usize, pivot: f64 },
    #[error("sample budget {budget} outside 1..={nodes}")]
    BudgetOutOfRange { budget: usize, nodes: usize },
    #[error("sample references {what} not present in the parent graph of {nodes} nodes")]
    ForeignSample { what: String, nodes: usize },
    #[error("aggregation statistics contain zero sampler runs")]
    EmptyStats,
    #[error("labeled node set is empty")]
    EmptyLabeledSet,
    #[error("forward trace does not match parameters: {0}")]
    TraceMismatch(String),
    #[error("class {class} has {count} members, fewer than the {folds} folds requested")]
    ClassTooSmall {
        class: usize,
        count: usize,
        folds: usize,
    },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("curve needs both classes present; only class {0} found")]
    SingleClass(usize),
    #[error("precision-recall curve needs at least one positive")]
    NoPositives,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("layer {index}: {source}")]
    Layer {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("{}:{line}:{column}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        column: usize,
        message: String,
    },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

fn subject_suffix(subject: Option<usize>) -> String {
    subject.map(|s| format!(" of subject {s}")).unwrap_or_default()
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        Error::ShapeMismatch { op, left, right }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn in_layer(self, index: usize) -> Self {
        Error::Layer {
            index,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}
