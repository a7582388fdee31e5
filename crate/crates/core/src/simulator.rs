//! The iteration driver: sample an activation, run the active agents through
//! the protocol, account communication and computation, record a trace.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::activation::ActivationScheme;
use crate::analysis::{lyapunov, AnalysisTuple, LyapunovWeights, OracleSolution};
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::protocol::{
    error_term, protocol_step, Freshness, HyperParams, Instance, ModeSchedule, NetworkState, UpdateMode,
};

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_DIVERGENCE_THRESHOLD: f64 = 1e6;

/// How the relative loss is normalized.
#[derive(Debug, Clone, PartialEq)]
pub enum Normalization {
    /// Against a precomputed optimum.
    Oracle(OracleSolution),
    /// Record raw losses only; see [`Trace::normalize`].
    Deferred,
}

/// Saddle point and weights for the Lyapunov column.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovSetup {
    pub star: AnalysisTuple,
    pub weights: LyapunovWeights,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub hp: HyperParams,
    pub scheme: ActivationScheme,
    pub modes: ModeSchedule,
    pub iterations: usize,
    /// Stop once the relative loss is at or below this; `0` disables.
    pub tolerance: f64,
    /// Record every `trace_every`-th iteration (plus the last one).
    pub trace_every: usize,
    pub freshness: Freshness,
    pub normalization: Normalization,
    pub lyapunov: Option<LyapunovSetup>,
    /// Check the linearization-error bound on every primal step.
    pub audit: bool,
    pub divergence_threshold: f64,
}

impl RunConfig {
    pub fn new(hp: HyperParams, scheme: ActivationScheme, modes: ModeSchedule, iterations: usize) -> Self {
        Self {
            hp,
            scheme,
            modes,
            iterations,
            tolerance: DEFAULT_TOLERANCE,
            trace_every: 1,
            freshness: Freshness::Fresh,
            normalization: Normalization::Deferred,
            lyapunov: None,
            audit: false,
            divergence_threshold: DEFAULT_DIVERGENCE_THRESHOLD,
        }
    }

    pub fn validate(&self, inst: &Instance) -> Result<()> {
        let m = inst.agents();
        self.hp.validate(m)?;
        self.modes.validate(m)?;
        if self.scheme.agents() != m {
            return Err(Error::InvalidArgument(format!(
                "activation scheme covers {} agents, network has {m}",
                self.scheme.agents()
            )));
        }
        if self.trace_every == 0 {
            return Err(Error::InvalidArgument("trace cadence must be at least 1".into()));
        }
        if !(self.tolerance >= 0.0) || !(self.divergence_threshold > 0.0) {
            return Err(Error::InvalidArgument("tolerance and divergence threshold must be non-negative".into()));
        }
        Ok(())
    }
}

/// Flop estimate for one primal step: `2 n d + 4 d (1 + |N|)` for the local
/// gradient and right-hand side; Newton steps add `n d²` the first time the
/// Hessian is assembled and `d³/3` for every factorization.
pub fn cost_model(mode: UpdateMode, hessian_cached: bool, rows: usize, d: usize, degree: usize) -> f64 {
    let (n, d, deg) = (rows as f64, d as f64, degree as f64);
    let gradient = 2.0 * n * d + 4.0 * d * (1.0 + deg);
    match mode {
        UpdateMode::Gradient => gradient,
        UpdateMode::Newton => {
            let assembly = if hessian_cached { 0.0 } else { n * d * d };
            gradient + assembly + d * d * d / 3.0
        }
    }
}

/// Cumulative per-agent costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostLedger {
    pub flops: Vec<f64>,
    /// Number of `d`-vectors sent.
    pub messages: Vec<u64>,
    pub comm_total: f64,
    pub comp_total: f64,
    hessian_cached: Vec<bool>,
}

impl CostLedger {
    pub fn new(agents: usize) -> Self {
        Self {
            flops: vec![0.0; agents],
            messages: vec![0; agents],
            comm_total: 0.0,
            comp_total: 0.0,
            hessian_cached: vec![false; agents],
        }
    }

    /// Charges agent `i` for one step and one broadcast to its neighbors.
    pub fn charge(&mut self, inst: &Instance, i: usize, mode: UpdateMode) {
        let d = inst.dim();
        let deg = inst.topology.degree(i);
        let flops = cost_model(mode, self.hessian_cached[i], inst.objectives[i].rows(), d, deg);
        if mode == UpdateMode::Newton {
            self.hessian_cached[i] = true;
        }
        self.flops[i] += flops;
        self.comp_total += flops;
        self.messages[i] += deg as u64;
        self.comm_total += (deg * d) as f64;
    }
}

/// Running record of `‖e_i‖ ≤ Π_ii ‖Δx_i‖` over every primal step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorAudit {
    pub checks: usize,
    /// Largest `‖e_i‖ − Π_ii ‖Δx_i‖`.
    pub worst_excess: f64,
    /// Largest `‖e_i‖` over Newton steps.
    pub worst_newton: f64,
}

impl Default for ErrorAudit {
    fn default() -> Self {
        Self { checks: 0, worst_excess: f64::NEG_INFINITY, worst_newton: 0.0 }
    }
}

impl ErrorAudit {
    pub fn record(&mut self, e_norm: f64, bound: f64, mode: UpdateMode) {
        self.checks += 1;
        self.worst_excess = self.worst_excess.max(e_norm - bound);
        if mode == UpdateMode::Newton {
            self.worst_newton = self.worst_newton.max(e_norm);
        }
    }

    pub fn merge(&mut self, other: &ErrorAudit) {
        self.checks += other.checks;
        self.worst_excess = self.worst_excess.max(other.worst_excess);
        self.worst_newton = self.worst_newton.max(other.worst_newton);
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.worst_excess <= tol && self.worst_newton <= tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    /// Agents active in the iteration that produced this row (empty at `t = 0`).
    pub active: Vec<usize>,
    /// `NaN` until normalized in deferred mode.
    pub rel_loss: f64,
    /// `mean_i l(x_i)`, the global loss averaged over agent iterates.
    pub loss: f64,
    pub consensus_res: f64,
    pub reg_res: f64,
    pub lyapunov: Option<f64>,
    pub comm_cost: f64,
    pub comp_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

impl Trace {
    /// Fills `rel_loss` from raw losses and `l(x*)`.
    pub fn normalize(&mut self, optimal_value: f64) {
        let Some(first) = self.rows.first() else { return };
        let denom = first.loss - optimal_value;
        for row in &mut self.rows {
            row.rel_loss = (row.loss - optimal_value) / denom;
        }
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Trace,
    pub ledger: CostLedger,
    pub audit: Option<ErrorAudit>,
    pub state: NetworkState,
    /// Reached the tolerance before the iteration budget.
    pub converged: bool,
}

/// `mean_i l(x_i)` with `l = Σ_j f_j + g`.
fn mean_loss(inst: &Instance, x: &[Vector]) -> f64 {
    let reg = &inst.regularizer;
    x.iter().map(|xi| inst.aggregate.value(xi) + reg.value(xi)).sum::<f64>() / x.len() as f64
}

fn mean_excess(inst: &Instance, oracle: &OracleSolution, x: &[Vector]) -> f64 {
    x.iter().map(|xi| oracle.excess(&inst.regularizer, xi)).sum::<f64>() / x.len() as f64
}

fn consensus_residual(inst: &Instance, x: &[Vector]) -> f64 {
    libm::sqrt(inst.topology.edges().iter().map(|&(i, j)| (&x[i] - &x[j]).norm_squared()).sum())
}

/// Edge tuple carried alongside the protocol: `z = ½E_u x` and `α` summed
/// over induced active edges.
fn induced_tuple(inst: &Instance, state: &NetworkState, alpha: &[Vector]) -> AnalysisTuple {
    AnalysisTuple {
        x: state.x.clone(),
        z: inst.topology.edges().iter().map(|&(i, j)| (&state.x[i] + &state.x[j]) * 0.5).collect(),
        alpha: alpha.to_vec(),
        theta: state.theta.clone(),
        lambda: state.lambda.clone(),
    }
}

/// Runs the protocol from `x⁰ = 0` with `x⁰` already in every buffer.
pub fn run(inst: &Instance, cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate(inst)?;
    let (m, d) = (inst.agents(), inst.dim());
    let mut state = NetworkState::zeros(&inst.topology, d);
    let mut ledger = CostLedger::new(m);
    let mut audit = cfg.audit.then(ErrorAudit::default);
    let mut alpha = crate::linalg::zeros(d, inst.topology.edge_count());

    let initial_excess = match &cfg.normalization {
        Normalization::Oracle(o) => {
            let e = mean_excess(inst, o, &state.x);
            if !(e > 0.0) {
                return Err(Error::InvalidArgument(
                    "the initial point is already optimal, relative loss is undefined".into(),
                ));
            }
            Some((o, e))
        }
        Normalization::Deferred => None,
    };

    let observe = |t: usize, active: Vec<usize>, state: &NetworkState, alpha: &[Vector], ledger: &CostLedger| {
        let rel_loss = match initial_excess {
            Some((o, e0)) => mean_excess(inst, o, &state.x) / e0,
            None => f64::NAN,
        };
        TraceRow {
            t,
            active,
            rel_loss,
            loss: mean_loss(inst, &state.x),
            consensus_res: consensus_residual(inst, &state.x),
            reg_res: (&state.x[cfg.hp.selector] - &state.theta).norm(),
            lyapunov: cfg.lyapunov.as_ref().map(|s| lyapunov(&induced_tuple(inst, state, alpha), &s.star, &s.weights)),
            comm_cost: ledger.comm_total,
            comp_cost: ledger.comp_total,
        }
    };

    let mut trace = Trace { rows: vec![observe(0, Vec::new(), &state, &alpha, &ledger)] };
    trace.rows[0].rel_loss = if initial_excess.is_some() { 1.0 } else { f64::NAN };
    let mut converged = false;

    for t in 0..cfg.iterations {
        let rec = cfg.scheme.sample(t, &inst.topology);
        let updates = protocol_step(inst, &mut state, &rec.agents, &cfg.hp, &cfg.modes, t, cfg.freshness)?;
        for up in &updates {
            ledger.charge(inst, up.agent, up.mode);
            if let Some(a) = audit.as_mut() {
                let e = error_term(&inst.objectives[up.agent], &up.x_prev, &up.x_next, up.mode, &inst.constants);
                a.record(e.e.norm(), e.bound, up.mode);
            }
        }
        if cfg.lyapunov.is_some() {
            let half = 0.5 * cfg.hp.mu_z;
            for &k in &rec.edges {
                let (i, j) = inst.topology.edges()[k];
                alpha[k] += (&state.x[i] - &state.x[j]) * half;
            }
        }

        let row = observe(t + 1, rec.agents, &state, &alpha, &ledger);
        let rel = row.rel_loss;
        if rel.is_nan() && initial_excess.is_some() || rel.is_finite() && rel > cfg.divergence_threshold {
            return Err(Error::Diverged { iteration: t + 1, rel_loss: rel });
        }
        converged = rel <= cfg.tolerance;
        let last = converged || t + 1 == cfg.iterations;
        if (t + 1) % cfg.trace_every == 0 || last {
            trace.rows.push(row);
        }
        if converged {
            break;
        }
    }
    Ok(RunOutput { trace, ledger, audit, state, converged })
}
