use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("hilbert space dimension {local_dim}^{num_sites} exceeds the cap of {cap}")]
    DimensionCap {
        num_sites: usize,
        local_dim: usize,
        cap: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("site index {site} out of range for {num_sites} sites")]
    SiteOutOfRange { site: usize, num_sites: usize },

    #[error("invalid support: {0}")]
    InvalidSupport(String),

    #[error("operator is not hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("operators live on different hilbert spaces")]
    SpaceMismatch,

    #[error("unknown model kind `{0}`")]
    UnknownModel(String),

    #[error("model `{model}` expects {expected} couplings, got {actual}")]
    CouplingCount {
        model: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::DimensionCap { .. } | Error::Eigensolver(_))
    }
}
