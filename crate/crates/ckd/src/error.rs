use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// An operation was given tensors whose shapes do not conform to its
    /// signature. Carries the op name and the offending dimensions.
    #[error("shape mismatch in `{op}`: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("invalid argument to `{op}`: {detail}")]
    InvalidArgument { op: &'static str, detail: String },

    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },

    #[error("non-finite value encountered in `{context}`")]
    NonFinite { context: String },

    #[error("empty loss support: every position is masked out")]
    EmptyLossSupport,

    #[error("relevance masks or modality splits disagree between bundles: {0}")]
    MaskMismatch(String),

    #[error("no visual tokens: modality split m = 0")]
    NoVisualTokens,

    #[error("degenerate visual logits: zero-norm Gram matrix")]
    DegenerateVisualLogits,

    #[error("invalid model config: {0}")]
    InvalidConfig(String),

    #[error("checkpoint format error: {0}")]
    CheckpointFormat(String),

    #[error("incompatible models: {0}")]
    IncompatibleModels(String),

    #[error("training step order violated: {0}")]
    StepOrder(String),

    #[error("teacher checkpoint required for step {0} but none was given")]
    MissingTeacher(String),

    #[error("cascade plan invalid: {0}")]
    InvalidPlan(String),

    #[error("evaluation split `{0}` is empty")]
    EmptySplit(String),

    #[error("result tables disagree on split sets: {0}")]
    InconsistentTables(String),

    #[error("config error at `{path}`: {detail}")]
    Config { path: String, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    /// True for errors caused by a malformed config file rather than a
    /// failure at run time. The CLI maps these to a distinct exit code.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config { .. } | Error::InvalidConfig(_) | Error::InvalidPlan(_)
        )
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
