use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("type mismatch: transformer `{transformer}` expects {expected}, found {found}")]
    TypeMismatch {
        transformer: String,
        expected: String,
        found: String,
    },
    #[error("categorical vocabulary for `{0}` needs at least 2 labels")]
    EmptyVocabulary(String),
    #[error("label `{label}` is not in the vocabulary of `{transformer}`")]
    UnknownLabel { transformer: String, label: String },
    #[error("constraint violated: {0}")]
    ConstraintViolation(String),
    #[error("unknown action `{action}` for transformer `{transformer}`")]
    UnknownAction { transformer: String, action: String },
    #[error("unknown transformer `{0}`")]
    UnknownTransformer(String),
    #[error("unknown input processor `{0}`")]
    UnknownProcessor(String),
    #[error("malformed input: {0}")]
    MalformedInput(String),
    #[error("name `{0}` is already registered")]
    DuplicateName(String),
    #[error("index {index} out of range for state of arity {arity}")]
    IndexOutOfRange { index: usize, arity: usize },
    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("edge set is empty")]
    EmptyEdgeSet,
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("policy feature map mismatch: policy expects {expected}, state maps to {found}")]
    FeatureMapMismatch { expected: usize, found: usize },
    #[error("external model protocol error: {0}")]
    ExternalProtocol(String),
    #[error("feature encoding error: {0}")]
    Encoding(String),
    #[error("invalid pairing: {0}")]
    InvalidPairing(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unsupported format: {0}")]
    Format(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
