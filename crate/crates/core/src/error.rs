use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid schema `{schema}`: {reason}")]
    InvalidSchema { schema: String, reason: String },

    #[error("call `{call}` validated against schema `{schema}`")]
    SchemaNameMismatch { call: String, schema: String },

    #[error("no schema for function `{0}`")]
    MissingSchema(String),

    #[error("malformed call block: {0}")]
    MalformedCalls(String),

    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("unknown difficulty band {0}")]
    UnknownBand(usize),

    #[error("case `{0}` has no profile")]
    Unprofiled(String),

    #[error("degenerate length baseline {0} (must be positive)")]
    DegenerateBaseline(f64),

    #[error("group of {0} rewards is too small (need at least 2)")]
    GroupTooSmall(usize),

    #[error("probability ratio {0} is not positive")]
    NonPositiveRatio(f64),

    #[error("distributions differ in support: {0}")]
    Support(String),

    #[error("non-finite gradient for class {0}")]
    NonFiniteGradient(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty schema pool")]
    EmptySchemaPool,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
