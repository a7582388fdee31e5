//! Builds problems from a configuration and runs seeded sweeps, writing
//! per-run traces, the seed-averaged aggregate, plots and a summary.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use hippo_core::activation::{ActivationKind, ActivationScheme};
use hippo_core::analysis::{
    log_slope, solve_centralized, theoretical_eta, AnalysisTuple, LyapunovWeights, OracleSolution, TheoremConstants,
    DEFAULT_ORACLE_TOL,
};
use hippo_core::graph::{generate_connected_gnp, spectral_constants, SpectralConstants, Topology};
use hippo_core::linalg::Vector;
use hippo_core::model::{default_l1_weight, LocalObjective, Regularizer};
use hippo_core::protocol::{DeltaPolicy, Freshness, HyperParams, Instance, ModeSchedule, UpdateMode};
use hippo_core::simulator::{run, LyapunovSetup, Normalization, RunConfig, RunOutput, Trace};
use rayon::prelude::*;

use crate::config::{
    ActivationName, DeltaName, ExperimentConfig, FreshnessName, GraphKind, ModeName, RegularizerKind, SweepPoint,
};
use crate::data::{blocks_to_dataset, grade_columns, parse_libsvm, partition_even, synth_least_squares};
use crate::error::AppError;
use crate::graph_io::read_edge_list;
use crate::output::{trace_csv, Metadata};
use crate::plot::{log_y_plot, Series};

/// A ready-to-run instance with its optimum and hyperparameters.
#[derive(Debug, Clone)]
pub struct Problem {
    pub instance: Instance,
    pub oracle: OracleSolution,
    pub hp: HyperParams,
    pub spectral: SpectralConstants,
    /// Human-readable description of the data source.
    pub source: String,
}

pub fn build_topology(cfg: &ExperimentConfig, base: &Path) -> Result<Topology, AppError> {
    let g = &cfg.graph;
    if let Some(p) = &g.path {
        let text = fs::read_to_string(base.join(p)).map_err(|e| AppError::Data(format!("{}: {e}", p.display())))?;
        let topo = read_edge_list(&text).map_err(|e| AppError::Data(format!("{}: {e}", p.display())))?;
        if topo.agents() != g.agents {
            return Err(AppError::Config(format!(
                "graph.agents = {} but {} has {} agents",
                g.agents,
                p.display(),
                topo.agents()
            )));
        }
        return Ok(topo);
    }
    let seed = g.seed.unwrap_or(cfg.seed);
    match g.kind {
        GraphKind::Random => generate_connected_gnp(g.agents, g.p, seed, g.redraw_budget),
        GraphKind::Path => Topology::path(g.agents),
        GraphKind::Ring => Topology::ring(g.agents),
        GraphKind::Complete => Topology::complete(g.agents),
    }
    .map_err(AppError::from_core)
}

/// Loads or synthesizes the data, builds the network and solves for the
/// optimum. Relative paths are resolved against `base`.
pub fn build_problem(cfg: &ExperimentConfig, base: &Path) -> Result<Problem, AppError> {
    let topology = build_topology(cfg, base)?;
    let m = topology.agents();
    let d = &cfg.data;
    let data_seed = d.seed.unwrap_or(cfg.seed);
    let (mut dataset, source) = match &d.path {
        Some(p) => {
            let text = fs::read_to_string(base.join(p)).map_err(|e| AppError::Data(format!("{}: {e}", p.display())))?;
            let ds = parse_libsvm(&text, d.dim).map_err(|e| AppError::Data(format!("{}: {e}", p.display())))?;
            (ds, format!("libsvm:{}", p.display()))
        }
        None => {
            let dim = d.dim.unwrap_or(6);
            let synth = synth_least_squares(1, dim, d.rows, d.noise, data_seed);
            let mut ds = blocks_to_dataset(&synth.blocks);
            grade_columns(&mut ds, d.condition);
            (ds, format!("synthetic:rows={},dim={dim},noise={},condition={}", d.rows, d.noise, d.condition))
        }
    };
    if dataset.len() < m {
        return Err(AppError::Data(format!("{} rows cannot cover {m} agents", dataset.len())));
    }
    if d.standardize {
        dataset.standardize();
    }
    let shuffle = d.shuffle.then_some(data_seed);
    let objectives = partition_even(&dataset, m, shuffle)
        .into_iter()
        .map(|(a, b)| LocalObjective::new(a, b, d.ridge))
        .collect::<Result<Vec<_>, _>>()
        .map_err(AppError::from_core)?;

    let dim = dataset.dim;
    let r = &cfg.regularizer;
    let regularizer = match r.kind {
        RegularizerKind::Zero => Regularizer::Zero,
        RegularizerKind::L1 => Regularizer::L1 { gamma: r.gamma.unwrap_or_else(|| default_l1_weight(&objectives)) },
        RegularizerKind::Box => Regularizer::Box {
            lower: Vector::from_element(dim, r.lower.unwrap_or(f64::NEG_INFINITY)),
            upper: Vector::from_element(dim, r.upper.unwrap_or(f64::INFINITY)),
        },
    };
    let instance = Instance::new(topology, objectives, regularizer).map_err(|e| match e {
        hippo_core::Error::NotStronglyConvex { .. } => AppError::Data(e.to_string()),
        other => AppError::from_core(other),
    })?;
    let oracle = solve_centralized(&instance.objectives, &instance.regularizer, DEFAULT_ORACLE_TOL)
        .map_err(|e| AppError::Data(e.to_string()))?;
    let hp = hyper_params(cfg, &instance)?;
    let spectral = spectral_constants(&instance.incidence, hp.selector).map_err(AppError::from_core)?;
    Ok(Problem { instance, oracle, hp, spectral, source })
}

pub fn hyper_params(cfg: &ExperimentConfig, inst: &Instance) -> Result<HyperParams, AppError> {
    let h = &cfg.hyper;
    let hp = HyperParams {
        mu_z: h.mu_z.unwrap_or(2.0 * h.mu_theta),
        mu_theta: h.mu_theta,
        epsilon: h.epsilon.unwrap_or(inst.constants.big_m_f),
        delta: match h.delta {
            DeltaName::Theorem => DeltaPolicy::Theorem,
            DeltaName::Asymptotic => DeltaPolicy::Asymptotic,
        },
        delta_overrides: h.delta_overrides.as_ref().map(|v| v.iter().map(|&x| Some(x)).collect()).unwrap_or_default(),
        selector: h.selector - 1,
    };
    hp.validate(inst.agents()).map_err(AppError::from_core)?;
    if h.theorem_mode {
        hp.check_theorem_mode().map_err(AppError::from_core)?;
    }
    Ok(hp)
}

pub fn activation_scheme(cfg: &ExperimentConfig, point: &SweepPoint, seed: u64) -> Result<ActivationScheme, AppError> {
    let a = &cfg.activation;
    let m = cfg.graph.agents;
    let kind = match a.kind {
        ActivationName::Synchronous => ActivationKind::Synchronous,
        ActivationName::Single => ActivationKind::SingleUniform,
        ActivationName::Bernoulli => ActivationKind::PerAgentBernoulli(a.probabilities.clone().unwrap_or_default()),
        ActivationName::Fraction => ActivationKind::FractionUniform(point.fraction.or(a.fraction).unwrap_or(1.0)),
        ActivationName::Poisson => ActivationKind::PoissonClocks(a.rates.clone().unwrap_or_default()),
    };
    ActivationScheme::new(kind, m, seed).map_err(AppError::from_core)
}

pub fn mode_schedule(cfg: &ExperimentConfig, point: &SweepPoint) -> Result<ModeSchedule, AppError> {
    if let Some(ex) = &cfg.modes.explicit {
        return Ok(ModeSchedule::Fixed(
            ex.iter()
                .map(|m| match m {
                    ModeName::Gradient => UpdateMode::Gradient,
                    ModeName::Newton => UpdateMode::Newton,
                })
                .collect(),
        ));
    }
    let q = point.newton_fraction.unwrap_or(cfg.modes.newton_fraction);
    ModeSchedule::newton_fraction(cfg.graph.agents, q, cfg.modes.seed.unwrap_or(cfg.seed)).map_err(AppError::from_core)
}

/// Certified constants for a sweep point, when the hyperparameters are in
/// theorem mode.
pub fn theory_for(problem: &Problem, scheme: &ActivationScheme) -> Option<TheoremConstants> {
    let act = scheme.expected_activation(&problem.instance.topology);
    theoretical_eta(&problem.instance.constants, &problem.spectral, &problem.hp, act.p_min).ok()
}

pub fn run_config(
    cfg: &ExperimentConfig,
    problem: &Problem,
    point: &SweepPoint,
    seed: u64,
) -> Result<RunConfig, AppError> {
    let scheme = activation_scheme(cfg, point, seed)?;
    let modes = mode_schedule(cfg, point)?;
    let mut rc = RunConfig::new(problem.hp.clone(), scheme, modes, cfg.iterations);
    rc.tolerance = cfg.tolerance;
    rc.trace_every = cfg.trace_every;
    rc.freshness = match cfg.freshness {
        FreshnessName::Fresh => Freshness::Fresh,
        FreshnessName::Snapshot => Freshness::Snapshot,
    };
    rc.normalization = Normalization::Oracle(problem.oracle.clone());
    rc.audit = true;
    if cfg.lyapunov {
        let tc = theory_for(problem, &rc.scheme)
            .ok_or_else(|| AppError::Config("lyapunov: hyperparameters are not in theorem mode".into()))?;
        let star = AnalysisTuple::star(&problem.instance, &problem.hp, &problem.oracle).map_err(AppError::from_core)?;
        let act = rc.scheme.expected_activation(&problem.instance.topology);
        let weights = LyapunovWeights::new(&tc, &act, problem.hp.selector).map_err(AppError::from_core)?;
        rc.lyapunov = Some(LyapunovSetup { star, weights });
    }
    Ok(rc)
}

/// Seed-averaged curve on the union of recorded iterations. A run that
/// stopped early holds its last recorded value.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub t: Vec<usize>,
    pub rel_loss: Vec<f64>,
    pub comp_cost: Vec<f64>,
}

impl Curve {
    /// First recorded iteration with `rel_loss ≤ threshold`.
    pub fn first_below(&self, threshold: f64) -> Option<usize> {
        self.t.iter().zip(&self.rel_loss).find(|(_, &v)| v <= threshold).map(|(&t, _)| t)
    }

    /// Mean computation cost at the first crossing of `threshold`.
    pub fn cost_below(&self, threshold: f64) -> Option<f64> {
        self.rel_loss.iter().zip(&self.comp_cost).find(|(&v, _)| v <= threshold).map(|(_, &c)| c)
    }

    /// `exp` of the fitted slope of `ln rel_loss` per iteration.
    pub fn fitted_rate(&self) -> f64 {
        let pts: Vec<(f64, f64)> = self.t.iter().zip(&self.rel_loss).map(|(&t, &v)| (t as f64, v)).collect();
        log_slope(&pts).exp()
    }
}

pub fn aggregate(traces: &[&Trace]) -> Curve {
    let mut ts: Vec<usize> = traces.iter().flat_map(|tr| tr.rows.iter().map(|r| r.t)).collect();
    ts.sort_unstable();
    ts.dedup();
    let k = traces.len() as f64;
    let mut cursor = vec![0usize; traces.len()];
    let mut rel_loss = Vec::with_capacity(ts.len());
    let mut comp_cost = Vec::with_capacity(ts.len());
    for &t in &ts {
        let (mut l, mut c) = (0.0, 0.0);
        for (tr, pos) in traces.iter().zip(cursor.iter_mut()) {
            while *pos + 1 < tr.rows.len() && tr.rows[*pos + 1].t <= t {
                *pos += 1;
            }
            l += tr.rows[*pos].rel_loss;
            c += tr.rows[*pos].comp_cost;
        }
        rel_loss.push(l / k);
        comp_cost.push(c / k);
    }
    Curve { t: ts, rel_loss, comp_cost }
}

/// All runs of one sweep point.
#[derive(Debug, Clone)]
pub struct PointResult {
    pub point: SweepPoint,
    pub runs: Vec<(u64, RunOutput)>,
    pub curve: Curve,
    pub theory: Option<TheoremConstants>,
    pub p_min: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub points: Vec<PointResult>,
}

/// Runs every (sweep point, seed) pair on a pool of `threads` workers
/// (`0` = rayon default). Results do not depend on the thread count.
pub fn run_sweep(cfg: &ExperimentConfig, problem: &Problem, threads: usize) -> Result<ExperimentResult, AppError> {
    let points = cfg.sweep_points();
    let jobs: Vec<(usize, u64)> = (0..points.len()).flat_map(|p| cfg.seeds.iter().map(move |&s| (p, s))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| AppError::Config(format!("thread pool: {e}")))?;
    let outputs: Vec<Result<RunOutput, AppError>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(p, seed)| {
                let rc = run_config(cfg, problem, &points[p], seed)?;
                run(&problem.instance, &rc).map_err(|e| match e {
                    hippo_core::Error::Diverged { .. } => {
                        AppError::Divergence(format!("{} seed {seed}: {e}", points[p].label()))
                    }
                    other => AppError::from_core(other),
                })
            })
            .collect()
    });
    let mut per_point: Vec<Vec<(u64, RunOutput)>> = vec![Vec::new(); points.len()];
    for (&(p, seed), out) in jobs.iter().zip(outputs) {
        per_point[p].push((seed, out?));
    }
    let mut results = Vec::with_capacity(points.len());
    for (point, runs) in points.into_iter().zip(per_point) {
        let scheme = activation_scheme(cfg, &point, cfg.seeds[0])?;
        let p_min = scheme.expected_activation(&problem.instance.topology).p_min;
        let theory = theory_for(problem, &scheme);
        let curve = aggregate(&runs.iter().map(|(_, r)| &r.trace).collect::<Vec<_>>());
        results.push(PointResult { point, runs, curve, theory, p_min });
    }
    Ok(ExperimentResult { points: results })
}

fn run_metadata(cfg_text: &str, problem: &Problem, pr: &PointResult, seed: u64, out: &RunOutput) -> Metadata {
    let c = &problem.instance.constants;
    let mut m = Metadata::default();
    m.push("label", pr.point.label())
        .push("seed", seed)
        .push("data_source", &problem.source)
        .push("agents", problem.instance.agents())
        .push("edges", problem.instance.topology.edge_count())
        .push("graph_redraws", problem.instance.topology.redraws())
        .push("dim", problem.instance.dim())
        .push("m_f", format!("{:e}", c.m_f))
        .push("M_f", format!("{:e}", c.big_m_f))
        .push("L_f", format!("{:e}", c.l_f))
        .push("optimal_value", format!("{:e}", problem.oracle.value))
        .push("oracle_residual", format!("{:e}", problem.oracle.residual))
        .push("mu_z", problem.hp.mu_z)
        .push("mu_theta", problem.hp.mu_theta)
        .push("epsilon", format!("{:e}", problem.hp.epsilon))
        .push("p_min", pr.p_min);
    match &pr.theory {
        Some(tc) => {
            m.push("eta", format!("{:e}", tc.eta)).push("theoretical_rate", format!("{:e}", tc.rate));
            if tc.epsilon_term_dropped {
                m.push("eta_note", "epsilon = 0, epsilon term dropped");
            }
        }
        None => {
            m.push("eta", "n/a (hyperparameters not in theorem mode)");
        }
    }
    if let Some(a) = &out.audit {
        m.push("error_bound_checks", a.checks)
            .push("error_bound_worst_excess", format!("{:e}", a.worst_excess))
            .push("newton_error_max", format!("{:e}", a.worst_newton));
    }
    m.push("iterations_run", out.trace.last().map_or(0, |r| r.t))
        .push("converged", out.converged)
        .push(
            "cost_model",
            "gradient step 2*n_i*d + 4*d*(1+|N_i|); Newton adds n_i*d^2 once (cached Hessian) + d^3/3 per step",
        )
        .push("comm_model", "d units per neighbor per active agent; communication rounds = iterations")
        .push("config", cfg_text);
    m
}

pub fn run_file_stem(point: &SweepPoint, seed: u64) -> String {
    format!("{}_seed{seed}", point.label())
}

/// Writes traces, metadata, `aggregate.csv`, both plots and `summary.txt`.
pub fn write_artifacts(
    cfg_text: &str,
    problem: &Problem,
    result: &ExperimentResult,
    out_dir: &Path,
) -> Result<(), AppError> {
    let traces = out_dir.join("traces");
    fs::create_dir_all(&traces)?;
    for pr in &result.points {
        for (seed, out) in &pr.runs {
            let stem = run_file_stem(&pr.point, *seed);
            fs::write(traces.join(format!("{stem}.csv")), trace_csv(&out.trace))?;
            fs::write(traces.join(format!("{stem}.meta")), run_metadata(cfg_text, problem, pr, *seed, out).render())?;
        }
    }

    let mut agg = String::from("label,newton_fraction,fraction,t,rel_loss,comp_cost\n");
    for pr in &result.points {
        let q = pr.point.newton_fraction.map(|v| v.to_string()).unwrap_or_default();
        let c = pr.point.fraction.map(|v| v.to_string()).unwrap_or_default();
        for k in 0..pr.curve.t.len() {
            let _ = writeln!(
                agg,
                "{},{q},{c},{},{:e},{:e}",
                pr.point.label(),
                pr.curve.t[k],
                pr.curve.rel_loss[k],
                pr.curve.comp_cost[k]
            );
        }
    }
    fs::write(out_dir.join("aggregate.csv"), agg)?;

    let rounds: Vec<Series> = result
        .points
        .iter()
        .map(|pr| Series {
            label: pr.point.label(),
            points: pr.curve.t.iter().zip(&pr.curve.rel_loss).map(|(&t, &v)| (t as f64, v)).collect(),
        })
        .collect();
    let cost: Vec<Series> = result
        .points
        .iter()
        .map(|pr| Series {
            label: pr.point.label(),
            points: pr.curve.comp_cost.iter().copied().zip(pr.curve.rel_loss.iter().copied()).collect(),
        })
        .collect();
    fs::write(
        out_dir.join("loss_vs_rounds.svg"),
        log_y_plot("Averaged relative loss", "communication rounds", "relative loss", &rounds),
    )?;
    fs::write(
        out_dir.join("loss_vs_cost.svg"),
        log_y_plot("Averaged relative loss", "computation cost (flops)", "relative loss", &cost),
    )?;
    fs::write(out_dir.join("summary.txt"), summary_text(problem, result))?;
    Ok(())
}

pub fn summary_text(problem: &Problem, result: &ExperimentResult) -> String {
    let c = &problem.instance.constants;
    let mut s = String::new();
    let _ = writeln!(s, "data: {}", problem.source);
    let _ = writeln!(
        s,
        "network: {} agents, {} edges; m_f = {:e}, M_f = {:e}, L_f = {:e}",
        problem.instance.agents(),
        problem.instance.topology.edge_count(),
        c.m_f,
        c.big_m_f,
        c.l_f
    );
    let _ = writeln!(s, "optimal value: {:e}", problem.oracle.value);
    for pr in &result.points {
        let _ = writeln!(s, "\n[{}] {} seeds", pr.point.label(), pr.runs.len());
        let _ = writeln!(s, "p_min = {}", pr.p_min);
        match &pr.theory {
            Some(tc) => {
                let _ = writeln!(
                    s,
                    "eta = {:e}{}",
                    tc.eta,
                    if tc.epsilon_term_dropped { " (epsilon term dropped)" } else { "" }
                );
                let _ = writeln!(s, "theoretical rate = {:.12}", tc.rate);
            }
            None => {
                let _ = writeln!(s, "eta = n/a (hyperparameters not in theorem mode)");
            }
        }
        let _ = writeln!(s, "observed fitted rate = {:.12}", pr.curve.fitted_rate());
        let last = pr.curve.rel_loss.last().copied().unwrap_or(f64::NAN);
        let _ = writeln!(s, "final relative loss = {last:e}");
        for e in 1..=4 {
            let thr = 10f64.powi(-e);
            match (pr.curve.first_below(thr), pr.curve.cost_below(thr)) {
                (Some(t), Some(cost)) => {
                    let _ = writeln!(s, "reaches 1e-{e} at round {t}, cost {cost:e}");
                }
                _ => {
                    let _ = writeln!(s, "does not reach 1e-{e}");
                }
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use hippo_core::simulator::TraceRow;

    fn trace(points: &[(usize, f64)]) -> Trace {
        Trace {
            rows: points
                .iter()
                .map(|&(t, v)| TraceRow {
                    t,
                    active: vec![],
                    rel_loss: v,
                    loss: 0.0,
                    consensus_res: 0.0,
                    reg_res: 0.0,
                    lyapunov: None,
                    comm_cost: 0.0,
                    comp_cost: t as f64,
                })
                .collect(),
        }
    }

    #[test]
    fn aggregate_pads_early_stopped_runs_with_their_last_value() {
        let a = trace(&[(0, 1.0), (1, 0.5), (2, 0.25), (3, 0.125)]);
        let b = trace(&[(0, 1.0), (1, 0.1)]);
        let c = aggregate(&[&a, &b]);
        assert_eq!(c.t, vec![0, 1, 2, 3]);
        assert_eq!(c.rel_loss, vec![1.0, 0.3, 0.175, 0.1125]);
        assert_eq!(c.comp_cost, vec![0.0, 1.0, 1.5, 2.0]);
        assert_eq!(c.first_below(0.2), Some(2));
        assert_eq!(c.first_below(1e-3), None);
    }

    #[test]
    fn fitted_rate_of_geometric_curve() {
        let c = Curve {
            t: (0..20).collect(),
            rel_loss: (0..20).map(|t| 0.7f64.powi(t)).collect(),
            comp_cost: vec![0.0; 20],
        };
        assert!((c.fitted_rate() - 0.7).abs() < 1e-12);
    }
}
