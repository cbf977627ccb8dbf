use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("matrix entries must be finite")]
    NonFinite,

    #[error("numeric backend failure: {0}")]
    Numeric(String),

    #[error("matrix is not symmetric")]
    NotSymmetric,

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    /// The Gram matrix (H+V)ᵀ(H+V) has a non-positive pivot: the objective is +∞ there.
    #[error("singular point: gram matrix is not positive definite")]
    SingularPoint,

    #[error("insufficient dimension: need d >= r + N, got d={d}, r={r}, N={n}")]
    InsufficientDimension { d: usize, r: usize, n: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
