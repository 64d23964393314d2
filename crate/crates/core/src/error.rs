use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("degenerate input: samples are affinely dependent")]
    DegenerateInput,
    #[error("boundary estimate is empty")]
    EmptyBoundary,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("closure exceeded cap of {0} elements")]
    ClosureOverflow(usize),
    #[error("non-finite loss during training")]
    NonFinite,
    #[error("artifact chain mismatch: expected config hash {expected}, found {found}")]
    HashMismatch { expected: String, found: String },
    #[error("unsupported artifact version {0}")]
    Version(u32),
    #[error("triangulation failed: {0}")]
    Triangulation(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
