use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("integration failed: non-finite integrand value {value} at x = {x}")]
    Integration { x: f64, value: f64 },

    #[error("invalid quadrature spec: {0}")]
    QuadratureSpec(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("all weights are zero")]
    ZeroWeights,

    #[error("non-finite log term in objective at sample {index}")]
    NonFiniteLog { index: usize },

    #[error("degenerate responsibilities: {0}")]
    Degenerate(String),

    #[error("empty candidate grid")]
    EmptyGrid,

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("scenario (k={k}, n={n}, l={l}) failed: {source}")]
    Scenario {
        k: usize,
        n: usize,
        l: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{} scenario(s) failed; first: {}", failed.len(), failed.first().map(|f| f.1.as_str()).unwrap_or(""))]
    PlanFailed {
        failed: Vec<((usize, usize, usize), String)>,
    },

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
