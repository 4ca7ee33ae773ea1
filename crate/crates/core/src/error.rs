use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error(
        "fixed-point solver did not converge after {iterations} iterations (residual {residual:e})"
    )]
    SolverFailure { iterations: usize, residual: f64 },

    /// The arrival rate is at or above the throughput capacity, so the local
    /// queue has no stationary regime and the queuing delay diverges.
    #[error("unstable load: lambda = {lambda} is not below the service rate mu_s = {mu_s}")]
    Unstable { lambda: f64, mu_s: f64 },

    #[error("conditional occupancy undefined: relay buffer is full with probability 1")]
    DegenerateConditioning,

    #[error("simulation failed: {0}")]
    Simulation(String),
}
