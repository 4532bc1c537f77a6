use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A program, value or instruction violates a structural invariant.
    #[error("structural error: {0}")]
    Structural(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid kernel specification: {0}")]
    Spec(String),
    #[error("unsupported reference construct: {0}")]
    Unsupported(String),
    #[error("invalid sketch: {0}")]
    Sketch(String),
    #[error("signature mismatch: {0}")]
    Signature(String),
    #[error("sketch too restrictive: no solution with at most {0} components")]
    SketchTooRestrictive(usize),
    #[error("synthesis timed out before an initial solution was found")]
    Timeout,
    #[error("search node budget exhausted")]
    Budget,
    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("code generation error: {0}")]
    Codegen(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
