use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // Configuration.
    #[error("missing field: {0}")]
    MissingField(String),
    #[error("example label does not match output kind: {0}")]
    KindMismatch(String),
    #[error("task declares no input fields")]
    EmptyInputs,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    // Providers.
    #[error("provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("prompt of {got} tokens exceeds the {limit}-token context limit")]
    ContextOverflow { got: usize, limit: usize },

    // Cache store.
    #[error("embedding dimension {got} does not match index dimension {want}")]
    DimMismatch { got: usize, want: usize },
    #[error("cache file unreadable at line {line}: {reason}")]
    CorruptCache { line: usize, reason: String },

    // Executors.
    #[error("cannot train a model from an empty training set")]
    EmptyTrainingSet,
    #[error("bad probability distribution: {0}")]
    BadDistribution(String),
    #[error("empty token sequence")]
    EmptySequence,
    #[error("token probability must be in (0, 1], got {0}")]
    NonPositiveProb(f64),
    #[error("requested {want} examples but only {have} available")]
    NotEnoughExamples { want: usize, have: usize },
    #[error("cannot parse response {response:?} as {kind}")]
    ParseFailure { response: String, kind: String },
    #[error("tool registry is missing tool {0:?} declared by the task")]
    MissingTool(String),

    // Optimizer.
    #[error("module cost must be positive")]
    ZeroCost,
    #[error("validation set is empty")]
    EmptyValidation,

    // Runtime.
    #[error("missing provider: {0}")]
    MissingProvider(String),
    #[error("model stage is active but the cache holds no exchanges to train from")]
    UntrainableModel,
    #[error("dataset does not match the task schema: {0}")]
    SchemaMismatch(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}
