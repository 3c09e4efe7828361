use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not Hermitian (relative asymmetry {asymmetry:.3e})")]
    NotHermitian { asymmetry: f64 },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eig:.3e})")]
    NotPsd { min_eig: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("singular matrix")]
    Singular,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("solver state became non-finite at outer {outer}, inner {inner}")]
    Diverged { outer: usize, inner: usize },

    #[error("bad magic in {0}")]
    BadMagic(&'static str),

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u8, expected: u8 },

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("malformed header: {0}")]
    Header(String),

    #[error("unsupported layer kind `{0}`")]
    UnsupportedLayer(String),

    #[error("graph validation failed: {0}")]
    Graph(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
