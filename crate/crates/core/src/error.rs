use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("logarithm undefined: points are antipodal (cut locus)")]
    CutLocus,

    #[error("degenerate bootstrap cloud: all tangent vectors vanish")]
    DegenerateCloud,

    #[error("empty input")]
    EmptyInput,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("optimizer failed: {0}")]
    OptimizerFailed(String),

    #[error("{dropped} of {total} bootstrap replicates failed to refit")]
    TooManyDropped { dropped: usize, total: usize },

    #[error("estimator `{0}` has no tangent-space structure")]
    NoTangentStructure(&'static str),

    #[error("estimator `{0}` does not support ball-constrained fits")]
    NoLocalFit(&'static str),

    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
