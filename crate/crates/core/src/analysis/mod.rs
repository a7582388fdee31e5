//! Ground truth and convergence diagnostics: the centralized oracle, the
//! edge-level analysis tuple `(x, z, α, θ, λ)`, KKT residuals, the theoretical
//! contraction coefficient, the weighted Lyapunov function and empirical
//! contraction checks.

mod contraction;
mod operator;
mod oracle;
mod theory;
mod tuple;

pub use contraction::{contraction_check, log_slope, ContractionReport, RatioRow};
pub use operator::{lyapunov_trajectory, operator_map, operator_step};
pub use oracle::{solve_centralized, OracleSolution, DEFAULT_ORACLE_TOL, ORACLE_ITERATION_CAP};
pub use theory::{lyapunov, theoretical_eta, LyapunovWeights, TheoremConstants};
pub use tuple::{error_identity_residual, kkt_residuals, kkt_residuals_network, AnalysisTuple, KktResiduals};
