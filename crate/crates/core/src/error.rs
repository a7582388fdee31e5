use alloc::string::String;

/// Failures raised by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no connected graph on {agents} agents with edge probability {probability} after {attempts} draws")]
    ConnectivityBudget { agents: usize, probability: f64, attempts: usize },
    #[error("graph is disconnected: stacked incidence operator has no positive eigenvalue")]
    Disconnected,
    #[error("local objective {agent} is not strongly convex (smallest Hessian eigenvalue {lambda_min:.3e}); add a ridge term")]
    NotStronglyConvex { agent: usize, lambda_min: f64 },
    #[error("agent {agent}: buffer has no value for neighbor {neighbor}")]
    MissingBuffer { agent: usize, neighbor: usize },
    #[error("agent {agent}: update system is not positive definite")]
    NotPositiveDefinite { agent: usize },
    #[error("hyperparameters violate theorem mode: {0}")]
    TheoremMode(String),
    #[error("activation scheme gives agent {agent} zero probability")]
    ZeroActivation { agent: usize },
    #[error("relative loss {rel_loss:.3e} exceeded divergence threshold at iteration {iteration}")]
    Diverged { iteration: usize, rel_loss: f64 },
    #[error("oracle solver stopped after {iterations} iterations with residual {residual:.3e}")]
    OracleBudget { iterations: usize, residual: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;
