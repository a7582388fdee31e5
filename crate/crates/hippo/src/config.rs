//! Experiment configuration (TOML). Unknown keys are rejected; semantic
//! checks report the offending field path.

use std::path::PathBuf;

use serde::Deserialize;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

fn fail<T>(path: &str, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError { path: path.into(), message: message.into() })
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seeds graph generation, synthetic data, row shuffling and the Newton
    /// agent permutation unless those sections override it.
    pub seed: u64,
    /// Activation seeds; results are averaged over them.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub iterations: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_one")]
    pub trace_every: usize,
    #[serde(default)]
    pub freshness: FreshnessName,
    /// Record the Lyapunov column (theorem-mode hyperparameters only).
    #[serde(default)]
    pub lyapunov: bool,
    #[serde(default)]
    pub data: DataConfig,
    pub graph: GraphConfig,
    #[serde(default)]
    pub regularizer: RegularizerConfig,
    pub hyper: HyperConfig,
    #[serde(default)]
    pub activation: ActivationConfig,
    #[serde(default)]
    pub modes: ModesConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_tolerance() -> f64 {
    hippo_core::simulator::DEFAULT_TOLERANCE
}

fn default_one() -> usize {
    1
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FreshnessName {
    #[default]
    Fresh,
    Snapshot,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// LIBSVM file; synthetic data is generated when absent.
    pub path: Option<PathBuf>,
    /// Declared feature dimension (required for synthetic data).
    pub dim: Option<usize>,
    /// Total synthetic rows.
    #[serde(default = "default_rows")]
    pub rows: usize,
    #[serde(default = "default_noise")]
    pub noise: f64,
    /// Ratio between the largest and smallest synthetic column scale.
    #[serde(default = "default_condition")]
    pub condition: f64,
    #[serde(default)]
    pub standardize: bool,
    #[serde(default = "default_true")]
    pub shuffle: bool,
    /// Ridge weight added to every local objective.
    #[serde(default)]
    pub ridge: f64,
    pub seed: Option<u64>,
}

fn default_rows() -> usize {
    3000
}

fn default_noise() -> f64 {
    0.1
}

fn default_condition() -> f64 {
    1.0
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            path: None,
            dim: Some(6),
            rows: default_rows(),
            noise: default_noise(),
            condition: default_condition(),
            standardize: false,
            shuffle: true,
            ridge: 0.0,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    #[default]
    Random,
    Path,
    Ring,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub agents: usize,
    #[serde(default)]
    pub kind: GraphKind,
    /// Edge probability for random graphs.
    #[serde(default = "default_edge_probability")]
    pub p: f64,
    pub seed: Option<u64>,
    #[serde(default = "default_redraws")]
    pub redraw_budget: usize,
    /// Edge-list file; overrides `kind`.
    pub path: Option<PathBuf>,
}

fn default_edge_probability() -> f64 {
    0.1
}

fn default_redraws() -> usize {
    hippo_core::graph::DEFAULT_REDRAW_BUDGET
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegularizerKind {
    #[default]
    L1,
    Zero,
    Box,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizerConfig {
    #[serde(default)]
    pub kind: RegularizerKind,
    /// l1 weight; defaults to `0.1 · ‖Σ A_iᵀ b_i‖_∞`.
    pub gamma: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeltaName {
    #[default]
    Theorem,
    Asymptotic,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperConfig {
    pub mu_theta: f64,
    /// Defaults to `2 μ_θ`.
    pub mu_z: Option<f64>,
    /// Defaults to the largest local curvature `M_f`.
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub delta: DeltaName,
    pub delta_overrides: Option<Vec<f64>>,
    /// Selector agent, 1-based.
    #[serde(default = "default_one")]
    pub selector: usize,
    /// Enforce `μ_z = 2μ_θ` and `Δ_ii = ε` before running.
    #[serde(default)]
    pub theorem_mode: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationName {
    #[default]
    Synchronous,
    Single,
    Bernoulli,
    Fraction,
    Poisson,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivationConfig {
    #[serde(default)]
    pub kind: ActivationName,
    /// `C` for the fraction scheme.
    pub fraction: Option<f64>,
    /// Per-agent probabilities for the Bernoulli scheme.
    pub probabilities: Option<Vec<f64>>,
    /// Per-agent clock rates for the Poisson scheme.
    pub rates: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    Gradient,
    Newton,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModesConfig {
    /// Share `q` of Newton agents.
    #[serde(default)]
    pub newton_fraction: f64,
    pub seed: Option<u64>,
    /// Explicit per-agent modes; excludes `newton_fraction` sweeps.
    pub explicit: Option<Vec<ModeName>>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub newton_fraction: Vec<f64>,
    /// Values of `C`; requires the fraction activation scheme.
    #[serde(default)]
    pub fraction: Vec<f64>,
}

/// One point of the sweep grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub newton_fraction: Option<f64>,
    pub fraction: Option<f64>,
}

impl SweepPoint {
    pub fn label(&self) -> String {
        let mut s = match self.newton_fraction {
            Some(q) => format!("HIPPO-{}", (q * 100.0).round() as i64),
            None => "HIPPO-explicit".to_string(),
        };
        if let Some(c) = self.fraction {
            s.push_str(&format!("_C{c}"));
        }
        s
    }
}

fn positive(path: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        fail(path, format!("must be positive and finite, got {v}"))
    }
}

fn unit_interval(path: &str, v: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        fail(path, format!("must lie in [0, 1], got {v}"))
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let message = e.message().to_string();
            let path = e
                .span()
                .map(|s| {
                    let line = text[..s.start.min(text.len())].lines().count().max(1);
                    format!("line {line}")
                })
                .unwrap_or_else(|| "config".into());
            ConfigError { path, message }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let m = self.graph.agents;
        if m < 2 {
            return fail("graph.agents", "need at least 2 agents");
        }
        if self.seeds.is_empty() {
            return fail("seeds", "need at least one seed");
        }
        if self.trace_every == 0 {
            return fail("trace_every", "must be at least 1");
        }
        if !(self.tolerance >= 0.0) {
            return fail("tolerance", "must be non-negative");
        }
        if self.graph.path.is_none()
            && self.graph.kind == GraphKind::Random
            && !(self.graph.p > 0.0 && self.graph.p <= 1.0)
        {
            return fail("graph.p", format!("must lie in (0, 1], got {}", self.graph.p));
        }

        let d = &self.data;
        if d.path.is_none() {
            match d.dim {
                Some(0) | None => return fail("data.dim", "synthetic data needs a positive dimension"),
                Some(_) => {}
            }
            if d.rows < m {
                return fail("data.rows", format!("{} rows cannot cover {m} agents", d.rows));
            }
            if !(d.noise >= 0.0) {
                return fail("data.noise", "must be non-negative");
            }
            if !(d.condition >= 1.0 && d.condition.is_finite()) {
                return fail("data.condition", format!("must be finite and at least 1, got {}", d.condition));
            }
        }
        if !(d.ridge >= 0.0) {
            return fail("data.ridge", "must be non-negative");
        }

        let r = &self.regularizer;
        match r.kind {
            RegularizerKind::L1 => {
                if let Some(g) = r.gamma {
                    if !(g >= 0.0) {
                        return fail("regularizer.gamma", "must be non-negative");
                    }
                }
            }
            RegularizerKind::Box => match (r.lower, r.upper) {
                (Some(l), Some(u)) if l <= u => {}
                (Some(_), Some(_)) => return fail("regularizer.lower", "must not exceed regularizer.upper"),
                _ => return fail("regularizer", "box needs lower and upper"),
            },
            RegularizerKind::Zero => {}
        }

        let h = &self.hyper;
        positive("hyper.mu_theta", h.mu_theta)?;
        if let Some(mz) = h.mu_z {
            positive("hyper.mu_z", mz)?;
        }
        if let Some(e) = h.epsilon {
            if !(e >= 0.0) {
                return fail("hyper.epsilon", "must be non-negative");
            }
        }
        if h.selector == 0 || h.selector > m {
            return fail("hyper.selector", format!("must lie in 1..={m}"));
        }
        if let Some(ov) = &h.delta_overrides {
            if ov.len() != m {
                return fail("hyper.delta_overrides", format!("expected {m} values, got {}", ov.len()));
            }
            if ov.iter().any(|v| !(*v >= 0.0)) {
                return fail("hyper.delta_overrides", "must be non-negative");
            }
        }
        if h.theorem_mode {
            if let Some(mz) = h.mu_z {
                if (mz - 2.0 * h.mu_theta).abs() > 1e-12 * mz {
                    return fail("hyper.mu_z", format!("theorem mode needs mu_z = 2 mu_theta = {}", 2.0 * h.mu_theta));
                }
            }
            if h.delta != DeltaName::Theorem {
                return fail("hyper.delta", "theorem mode needs the uniform epsilon policy");
            }
            if h.delta_overrides.is_some() {
                return fail("hyper.delta_overrides", "not allowed in theorem mode");
            }
        }
        if self.lyapunov && !h.theorem_mode {
            return fail("lyapunov", "needs hyper.theorem_mode = true");
        }

        let a = &self.activation;
        match a.kind {
            ActivationName::Fraction => {
                let c = a.fraction.unwrap_or(1.0);
                if !(c > 0.0 && c <= 1.0) {
                    return fail("activation.fraction", format!("must lie in (0, 1], got {c}"));
                }
            }
            ActivationName::Bernoulli => match &a.probabilities {
                Some(p) if p.len() == m => {
                    if p.iter().any(|v| !(*v > 0.0 && *v <= 1.0)) {
                        return fail("activation.probabilities", "must lie in (0, 1]");
                    }
                }
                _ => return fail("activation.probabilities", format!("need {m} probabilities")),
            },
            ActivationName::Poisson => match &a.rates {
                Some(r) if r.len() == m => {
                    if r.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                        return fail("activation.rates", "must be positive");
                    }
                }
                _ => return fail("activation.rates", format!("need {m} rates")),
            },
            ActivationName::Synchronous | ActivationName::Single => {}
        }

        unit_interval("modes.newton_fraction", self.modes.newton_fraction)?;
        if let Some(ex) = &self.modes.explicit {
            if ex.len() != m {
                return fail("modes.explicit", format!("expected {m} modes, got {}", ex.len()));
            }
            if !self.sweep.newton_fraction.is_empty() {
                return fail("sweep.newton_fraction", "cannot sweep when modes.explicit is set");
            }
        }
        for (k, &q) in self.sweep.newton_fraction.iter().enumerate() {
            unit_interval(&format!("sweep.newton_fraction[{k}]"), q)?;
        }
        if !self.sweep.fraction.is_empty() && a.kind != ActivationName::Fraction {
            return fail("sweep.fraction", "requires activation.kind = \"fraction\"");
        }
        for (k, &c) in self.sweep.fraction.iter().enumerate() {
            if !(c > 0.0 && c <= 1.0) {
                return fail(&format!("sweep.fraction[{k}]"), format!("must lie in (0, 1], got {c}"));
            }
        }
        Ok(())
    }

    /// Cartesian product of the sweep lists; a single point when both are
    /// empty.
    pub fn sweep_points(&self) -> Vec<SweepPoint> {
        let qs: Vec<Option<f64>> = if self.modes.explicit.is_some() {
            vec![None]
        } else if self.sweep.newton_fraction.is_empty() {
            vec![Some(self.modes.newton_fraction)]
        } else {
            self.sweep.newton_fraction.iter().map(|&q| Some(q)).collect()
        };
        let cs: Vec<Option<f64>> = match self.activation.kind {
            ActivationName::Fraction if !self.sweep.fraction.is_empty() => {
                self.sweep.fraction.iter().map(|&c| Some(c)).collect()
            }
            ActivationName::Fraction => vec![Some(self.activation.fraction.unwrap_or(1.0))],
            _ => vec![None],
        };
        qs.iter().flat_map(|&q| cs.iter().map(move |&c| SweepPoint { newton_fraction: q, fraction: c })).collect()
    }
}
