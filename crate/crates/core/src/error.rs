use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the toolkit can report. Each variant maps onto a short
/// category name (see [`Error::category`]) that the command line surfaces
/// verbatim.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("truncated data: {0}")]
    Truncated(String),

    #[error("unsupported dtype {found} (expected {expected})")]
    Dtype { expected: &'static str, found: u8 },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("unresolved weight `{0}`")]
    UnresolvedWeight(String),

    #[error("weight `{name}` has shape {found:?}, expected {expected:?}")]
    WeightShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("shape chain broken at layer `{layer}`: {reason}")]
    ShapeChain { layer: String, reason: String },

    #[error("model has no dropout layers")]
    NoDropout,

    #[error("unknown layer `{0}`")]
    UnknownLayer(String),

    #[error("task mismatch: {0}")]
    Task(String),

    #[error("invalid probability vector: {0}")]
    Probability(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no error-revealing inputs")]
    NoErrors,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn category(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::NonFinite(_) => "non_finite",
            Error::Format(_) => "format",
            Error::Truncated(_) => "truncated",
            Error::Dtype { .. } => "dtype",
            Error::Schema(_) => "schema",
            Error::UnresolvedWeight(_) => "unresolved_weight",
            Error::WeightShape { .. } => "weight_shape",
            Error::ShapeChain { .. } => "shape_chain",
            Error::NoDropout => "no_dropout",
            Error::UnknownLayer(_) => "unknown_layer",
            Error::Task(_) => "task",
            Error::Probability(_) => "probability",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::NoErrors => "no_errors",
            Error::Io(_) => "io",
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            Error::Io(e.into())
        } else {
            Error::Schema(e.to_string())
        }
    }
}
