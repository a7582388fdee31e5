//! Desk-scale correctness checks: engine equivalence, error-bound audit,
//! KKT residuals at the optimum and empirical contraction.

use std::fmt;

use hippo_core::analysis::{
    contraction_check, kkt_residuals, lyapunov_trajectory, theoretical_eta, AnalysisTuple, LyapunovWeights,
};
use hippo_core::linalg::max_abs_diff_blocks;
use hippo_core::protocol::{admm_reference_step, protocol_step, AdmmReferenceState, Freshness, NetworkState};
use hippo_core::simulator::{run, ErrorAudit};

use crate::config::ExperimentConfig;
use crate::error::AppError;
use crate::experiment::{activation_scheme, mode_schedule, run_config, Problem};

pub const MAX_AGENTS: usize = 6;
pub const MAX_DIM: usize = 4;
pub const EQUIVALENCE_ITERATIONS: usize = 200;
pub const STATE_TOL: f64 = 1e-10;
pub const DUAL_TOL: f64 = 1e-12;
pub const AUDIT_TOL: f64 = 1e-12;
pub const KKT_TOL: f64 = 1e-8;
pub const MAX_EXCEED_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub detail: String,
    pub passed: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
        }
        Ok(())
    }
}

fn engine_equivalence(cfg: &ExperimentConfig, p: &Problem) -> Result<Check, AppError> {
    let inst = &p.instance;
    let points = cfg.sweep_points();
    let modes = mode_schedule(cfg, &points[0])?;
    let all: Vec<usize> = (0..inst.agents()).collect();
    let mut r = AdmmReferenceState::zeros(inst);
    let mut s = NetworkState::zeros(&inst.topology, inst.dim());
    let (mut state_gap, mut dual_gap) = (0.0f64, 0.0f64);
    let (mut state_t, mut dual_t) = (0, 0);
    for t in 0..EQUIVALENCE_ITERATIONS {
        admm_reference_step(inst, &mut r, &p.hp, &modes, t).map_err(AppError::from_core)?;
        protocol_step(inst, &mut s, &all, &p.hp, &modes, t, Freshness::Fresh).map_err(AppError::from_core)?;
        let gap = max_abs_diff_blocks(&r.x, &s.x).max((&r.theta - &s.theta).amax()).max((&r.lambda - &s.lambda).amax());
        if gap > state_gap {
            (state_gap, state_t) = (gap, t);
        }
        for (k, &(i, j)) in inst.topology.edges().iter().enumerate() {
            let gap = (&r.alpha[k] + &r.beta[k]).amax().max((&r.z[k] - (&r.x[i] + &r.x[j]) * 0.5).amax());
            if gap > dual_gap {
                (dual_gap, dual_t) = (gap, t);
            }
        }
    }
    Ok(Check {
        name: "engine equivalence",
        detail: format!(
            "{EQUIVALENCE_ITERATIONS} synchronous steps; max |x, theta, lambda gap| = {state_gap:.3e} at t = {state_t} (tol {STATE_TOL:e}), \
             max |alpha + beta|, |z - avg x| = {dual_gap:.3e} at t = {dual_t} (tol {DUAL_TOL:e})"
        ),
        passed: state_gap <= STATE_TOL && dual_gap <= DUAL_TOL,
    })
}

fn error_audit(cfg: &ExperimentConfig, p: &Problem) -> Result<Check, AppError> {
    let mut total = ErrorAudit::default();
    for point in cfg.sweep_points() {
        for &seed in &cfg.seeds {
            let mut rc = run_config(cfg, p, &point, seed)?;
            rc.lyapunov = None;
            rc.audit = true;
            let out = run(&p.instance, &rc).map_err(AppError::from_core)?;
            if let Some(a) = &out.audit {
                total.merge(a);
            }
        }
    }
    Ok(Check {
        name: "linearization error bound",
        detail: format!(
            "{} agent steps; worst ||e|| - bound = {:.3e}, worst Newton ||e|| = {:.3e} (tol {AUDIT_TOL:e})",
            total.checks, total.worst_excess, total.worst_newton
        ),
        passed: total.checks > 0 && total.passes(AUDIT_TOL),
    })
}

fn kkt_at_optimum(p: &Problem) -> Result<(Check, AnalysisTuple), AppError> {
    let star = AnalysisTuple::star(&p.instance, &p.hp, &p.oracle).map_err(AppError::from_core)?;
    let k = kkt_residuals(&p.instance, &star, p.hp.selector);
    let worst = k.max();
    Ok((
        Check {
            name: "KKT at the optimum",
            detail: format!(
                "stationarity {:.3e}, consensus {:.3e}, edge {:.3e}, selector {:.3e}, subgradient {:.3e} (tol {KKT_TOL:e})",
                k.stationarity, k.consensus, k.edge, k.selector, k.subgradient
            ),
            passed: worst <= KKT_TOL,
        },
        star,
    ))
}

fn contraction(cfg: &ExperimentConfig, p: &Problem, star: &AnalysisTuple) -> Result<Vec<Check>, AppError> {
    let mut checks = Vec::new();
    for point in cfg.sweep_points() {
        let modes = mode_schedule(cfg, &point)?;
        let mut runs = Vec::with_capacity(cfg.seeds.len());
        let mut rate = f64::NAN;
        for &seed in &cfg.seeds {
            let scheme = activation_scheme(cfg, &point, seed)?;
            let act = scheme.expected_activation(&p.instance.topology);
            let tc =
                theoretical_eta(&p.instance.constants, &p.spectral, &p.hp, act.p_min).map_err(AppError::from_core)?;
            rate = tc.rate;
            let w = LyapunovWeights::new(&tc, &act, p.hp.selector).map_err(AppError::from_core)?;
            runs.push(
                lyapunov_trajectory(&p.instance, &p.hp, &modes, &scheme, star, &w, cfg.iterations)
                    .map_err(AppError::from_core)?,
            );
        }
        let rep = contraction_check(&runs, rate);
        let exceeding: Vec<String> = rep.rows.iter().filter(|r| r.exceeds).take(5).map(|r| r.t.to_string()).collect();
        let mut detail = format!(
            "[{}] bound {rate:.6}, {} seeds, exceed fraction {:.4} (max {MAX_EXCEED_FRACTION}), log slope {:.3e}",
            point.label(),
            runs.len(),
            rep.exceed_fraction,
            rep.slope
        );
        if !exceeding.is_empty() {
            detail.push_str(&format!("; first exceeding t: {}", exceeding.join(", ")));
        }
        checks.push(Check { name: "expected contraction", detail, passed: rep.passes(MAX_EXCEED_FRACTION) });
    }
    Ok(checks)
}

/// Runs every check. The contraction check needs theorem-mode
/// hyperparameters and is skipped otherwise.
pub fn verify(cfg: &ExperimentConfig, p: &Problem) -> Result<VerifyReport, AppError> {
    let (m, d) = (p.instance.agents(), p.instance.dim());
    if m > MAX_AGENTS || d > MAX_DIM {
        return Err(AppError::Config(format!(
            "verify is limited to {MAX_AGENTS} agents and dimension {MAX_DIM}; got {m} agents, dimension {d}"
        )));
    }
    let mut report = VerifyReport::default();
    report.checks.push(engine_equivalence(cfg, p)?);
    report.checks.push(error_audit(cfg, p)?);
    let (kkt, star) = kkt_at_optimum(p)?;
    report.checks.push(kkt);
    if cfg.hyper.theorem_mode {
        report.checks.extend(contraction(cfg, p, &star)?);
    }
    Ok(report)
}
