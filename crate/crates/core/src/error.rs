use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid sizes: {0}")]
    InvalidSizes(String),

    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("could not sample a connected topology for cluster {cluster} after {retries} retries")]
    ConnectivityUnreachable { cluster: usize, retries: usize },

    #[error("variances must be positive (sigma_u_sq = {sigma_u_sq}, sigma_v_sq = {sigma_v_sq})")]
    NonPositiveVariance { sigma_u_sq: f64, sigma_v_sq: f64 },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("neighborhoods are not symmetric: {l} is in the set of {k} but not vice versa")]
    AsymmetricNeighborhoods { k: usize, l: usize },

    #[error("neighborhood of agent {0} does not contain the agent itself")]
    MissingSelfLoop(usize),

    #[error("power iteration did not converge after {iters} iterations (residual {residual:e})")]
    NoConvergence { iters: usize, residual: f64 },

    #[error("iterate became non-finite at iteration {iteration}, agent {agent} (recursion {recursion})")]
    DivergenceDetected {
        iteration: i64,
        agent: usize,
        recursion: u8,
    },

    #[error("matrix D is not stable (spectral radius {0})")]
    UnstableD(f64),

    #[error("aggregate Hessian of group {0} is singular")]
    SingularAggregateHessian(usize),

    #[error("step size {mu} too large for the Chernoff bound (needs mu < {limit})")]
    StepSizeTooLarge { mu: f64, limit: f64 },

    #[error("threshold {theta} outside (0, {upper}]")]
    ThresholdOutOfRange { theta: f64, upper: f64 },

    #[error("mean difference has mass along a null direction of Delta")]
    DegenerateDelta,

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}
