use thiserror::Error;

/// Crate-wide error type. Parse/format errors carry enough position
/// information to point at the offending line of an input file.
#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("behind camera: {0}")]
    BehindCamera(String),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("empty RoI: {0}")]
    EmptyRoi(String),

    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;
