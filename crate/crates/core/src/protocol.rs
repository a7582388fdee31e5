//! The hybrid primal-dual update engine.
//!
//! Each active agent linearizes the augmented Lagrangian around its current
//! iterate and takes one step with the block curvature
//! `J_ii + μ_z|N_i| + δ_il μ_θ + Δ_ii`, where `J_ii` is either zero (gradient
//! agents) or the local Hessian (Newton agents). Dual variables `φ_i`
//! aggregate the edge multipliers, and the selector agent `l` also owns the
//! regularizer copy `θ` and its multiplier `λ`.
//!
//! [`AdmmReferenceState`] runs the unreduced three-block iteration with
//! explicit edge variables `z` and multipliers `y = [α; β]`, and is used to
//! check that the reduced engine tracks it exactly.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{build_incidence, IncidenceSet, Topology};
use crate::linalg::{norm, spd_solve, zeros, Matrix, Vector};
use crate::model::{estimate_constants, prox, ConvexityConstants, LocalObjective, QuadraticSum, Regularizer};

/// Relative tolerance for the `μ_z = 2μ_θ` theorem-mode check.
const THEOREM_MODE_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UpdateMode {
    Gradient,
    Newton,
}

/// How `Δ_ii` is chosen when no per-agent override is given.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeltaPolicy {
    /// `Δ_ii = ε` for every agent.
    Theorem,
    /// `Δ_ii = 0` for Newton agents, `ε` for gradient agents.
    Asymptotic,
}

/// Which neighbor values the dual update reads when several agents are
/// active in the same iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Freshness {
    /// All active agents broadcast first; duals read the refreshed buffers.
    Fresh,
    /// Duals read neighbor values from the start of the iteration.
    Snapshot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    pub mu_z: f64,
    pub mu_theta: f64,
    pub epsilon: f64,
    pub delta: DeltaPolicy,
    /// Optional explicit `Δ_ii` per agent; overrides `delta`.
    pub delta_overrides: Vec<Option<f64>>,
    /// Selector agent `l` (0-based).
    pub selector: usize,
}

impl HyperParams {
    /// Theorem-mode parameters: `μ_z = 2μ_θ` and `Δ_ii = ε`.
    pub fn theorem(mu_theta: f64, epsilon: f64) -> Self {
        Self {
            mu_z: 2.0 * mu_theta,
            mu_theta,
            epsilon,
            delta: DeltaPolicy::Theorem,
            delta_overrides: Vec::new(),
            selector: 0,
        }
    }

    pub fn validate(&self, agents: usize) -> Result<()> {
        if !(self.mu_z > 0.0 && self.mu_theta > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "penalties must be positive (mu_z = {}, mu_theta = {})",
                self.mu_z, self.mu_theta
            )));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::InvalidArgument(format!("epsilon must be non-negative, got {}", self.epsilon)));
        }
        if self.selector >= agents {
            return Err(Error::InvalidArgument(format!(
                "selector agent {} out of range for {agents} agents",
                self.selector
            )));
        }
        if !self.delta_overrides.is_empty() && self.delta_overrides.len() != agents {
            return Err(Error::InvalidArgument(format!(
                "expected {agents} delta overrides, got {}",
                self.delta_overrides.len()
            )));
        }
        if self.delta_overrides.iter().flatten().any(|d| !(*d >= 0.0)) {
            return Err(Error::InvalidArgument("delta overrides must be non-negative".into()));
        }
        Ok(())
    }

    /// Checks `μ_z = 2μ_θ` and `Δ_ii = ε` for all agents.
    pub fn check_theorem_mode(&self) -> Result<()> {
        if (self.mu_z - 2.0 * self.mu_theta).abs() > THEOREM_MODE_RTOL * self.mu_z.abs() {
            return Err(Error::TheoremMode(format!("mu_z = {} but 2 * mu_theta = {}", self.mu_z, 2.0 * self.mu_theta)));
        }
        if self.delta != DeltaPolicy::Theorem {
            return Err(Error::TheoremMode("delta policy must be uniform epsilon".into()));
        }
        if self.delta_overrides.iter().flatten().any(|&d| d != self.epsilon) {
            return Err(Error::TheoremMode("per-agent delta overrides differ from epsilon".into()));
        }
        Ok(())
    }

    pub fn delta_for(&self, agent: usize, mode: UpdateMode) -> f64 {
        if let Some(Some(d)) = self.delta_overrides.get(agent) {
            return *d;
        }
        match (self.delta, mode) {
            (DeltaPolicy::Asymptotic, UpdateMode::Newton) => 0.0,
            _ => self.epsilon,
        }
    }
}

/// Per-agent update modes, fixed or cycling with the iteration counter.
#[derive(Debug, Clone, PartialEq)]
pub enum ModeSchedule {
    Fixed(Vec<UpdateMode>),
    Cyclic(Vec<Vec<UpdateMode>>),
}

impl ModeSchedule {
    pub fn uniform(agents: usize, mode: UpdateMode) -> Self {
        ModeSchedule::Fixed(vec![mode; agents])
    }

    /// The first `⌈q m⌉` agents of a seeded permutation use Newton updates.
    pub fn newton_fraction(agents: usize, q: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::InvalidArgument(format!("Newton fraction must lie in [0, 1], got {q}")));
        }
        let count = newton_count(agents, q);
        let mut order: Vec<usize> = (0..agents).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut modes = vec![UpdateMode::Gradient; agents];
        for &i in &order[..count] {
            modes[i] = UpdateMode::Newton;
        }
        Ok(ModeSchedule::Fixed(modes))
    }

    pub fn mode(&self, agent: usize, t: usize) -> UpdateMode {
        match self {
            ModeSchedule::Fixed(modes) => modes[agent],
            ModeSchedule::Cyclic(rounds) => rounds[t % rounds.len()][agent],
        }
    }

    pub fn validate(&self, agents: usize) -> Result<()> {
        let ok = match self {
            ModeSchedule::Fixed(modes) => modes.len() == agents,
            ModeSchedule::Cyclic(rounds) => !rounds.is_empty() && rounds.iter().all(|r| r.len() == agents),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("mode schedule does not cover {agents} agents")))
        }
    }
}

/// `⌈q m⌉`, robust to `q m` landing a hair above an integer.
pub fn newton_count(agents: usize, q: f64) -> usize {
    let raw = q * agents as f64;
    (libm::ceil(raw - 1e-9).max(0.0) as usize).min(agents)
}

/// A decentralized composite problem on a fixed network.
#[derive(Debug, Clone)]
pub struct Instance {
    pub topology: Topology,
    pub incidence: IncidenceSet,
    pub objectives: Vec<LocalObjective>,
    pub regularizer: Regularizer,
    pub constants: ConvexityConstants,
    /// `Σ_i f_i` as one quadratic.
    pub aggregate: QuadraticSum,
}

impl Instance {
    pub fn new(topology: Topology, objectives: Vec<LocalObjective>, regularizer: Regularizer) -> Result<Self> {
        if objectives.len() != topology.agents() {
            return Err(Error::InvalidArgument(format!(
                "{} objectives for {} agents",
                objectives.len(),
                topology.agents()
            )));
        }
        let d = objectives[0].dim();
        if objectives.iter().any(|o| o.dim() != d) {
            return Err(Error::InvalidArgument("local objectives disagree on dimension".into()));
        }
        regularizer.validate(d)?;
        let constants = estimate_constants(&objectives)?;
        let incidence = build_incidence(&topology);
        let aggregate = QuadraticSum::new(&objectives);
        Ok(Self { topology, incidence, objectives, regularizer, constants, aggregate })
    }

    pub fn agents(&self) -> usize {
        self.topology.agents()
    }

    pub fn dim(&self) -> usize {
        self.objectives[0].dim()
    }
}

/// Implementation state `v = [x; φ; θ; λ]` plus neighbor buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub x: Vec<Vector>,
    pub phi: Vec<Vector>,
    pub theta: Vector,
    pub lambda: Vector,
    /// `buffers[i][k]` is the latest `x` received from `neighbors(i)[k]`.
    pub buffers: Vec<Vec<Option<Vector>>>,
}

impl NetworkState {
    /// All-zero state with `x⁰ = 0` already broadcast to every neighbor.
    pub fn zeros(topology: &Topology, d: usize) -> Self {
        let mut s = Self::zeros_unbuffered(topology, d);
        for i in 0..topology.agents() {
            for slot in s.buffers[i].iter_mut() {
                *slot = Some(Vector::zeros(d));
            }
        }
        s
    }

    /// All-zero state whose buffers have not received anything yet.
    pub fn zeros_unbuffered(topology: &Topology, d: usize) -> Self {
        let m = topology.agents();
        Self {
            x: zeros(d, m),
            phi: zeros(d, m),
            theta: Vector::zeros(d),
            lambda: Vector::zeros(d),
            buffers: (0..m).map(|i| vec![None; topology.degree(i)]).collect(),
        }
    }

    /// Overwrites every buffer with the current `x` of the sender.
    pub fn broadcast_all(&mut self, topology: &Topology) {
        for i in 0..topology.agents() {
            for (k, &j) in topology.neighbors(i).iter().enumerate() {
                self.buffers[i][k] = Some(self.x[j].clone());
            }
        }
    }

    fn buffered(&self, topology: &Topology, i: usize) -> Result<Vec<&Vector>> {
        topology
            .neighbors(i)
            .iter()
            .zip(&self.buffers[i])
            .map(|(&j, slot)| slot.as_ref().ok_or(Error::MissingBuffer { agent: i, neighbor: j }))
            .collect()
    }

    fn deliver(&mut self, topology: &Topology, from: usize, value: &Vector) {
        for &j in topology.neighbors(from) {
            let pos = topology.neighbors(j).binary_search(&from).expect("adjacency lists are symmetric");
            self.buffers[j][pos] = Some(value.clone());
        }
    }
}

/// Right-hand side of the local update system for agent `i`:
/// `∇f_i(x_i) + φ_i + (μ_z/2)Σ_j(x_i − x_j) + δ_il(λ + μ_θ(x_l − θ))`,
/// with `x_j` read from the buffer.
pub fn local_lagrangian_gradient(inst: &Instance, i: usize, state: &NetworkState, hp: &HyperParams) -> Result<Vector> {
    let xi = &state.x[i];
    let mut g = inst.objectives[i].gradient(xi) + &state.phi[i];
    for xj in state.buffered(&inst.topology, i)? {
        g += (xi - xj) * (0.5 * hp.mu_z);
    }
    if i == hp.selector {
        g += &state.lambda + (xi - &state.theta) * hp.mu_theta;
    }
    Ok(g)
}

/// Solves `(J_ii + μ_z|N_i| + δ_il μ_θ + Δ_ii) u = g`.
pub fn update_direction(
    inst: &Instance,
    i: usize,
    mode: UpdateMode,
    g: &Vector,
    x_i: &Vector,
    hp: &HyperParams,
) -> Result<Vector> {
    let mut shift = hp.mu_z * inst.topology.degree(i) as f64 + hp.delta_for(i, mode);
    if i == hp.selector {
        shift += hp.mu_theta;
    }
    match mode {
        UpdateMode::Gradient => {
            if !(shift > 0.0) {
                return Err(Error::NotPositiveDefinite { agent: i });
            }
            Ok(g / shift)
        }
        UpdateMode::Newton => {
            let d = g.len();
            let system = inst.objectives[i].hessian(x_i) + Matrix::identity(d, d) * shift;
            spd_solve(system, g).ok_or(Error::NotPositiveDefinite { agent: i })
        }
    }
}

/// Outcome of one agent's primal step: the value it broadcasts.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalUpdate {
    pub agent: usize,
    pub mode: UpdateMode,
    pub x_prev: Vector,
    pub x_next: Vector,
}

/// Primal half of an active agent's round: retrieve buffered neighbor values,
/// solve for the direction and form `x_i − u_i`. The state is not modified.
pub fn agent_step(
    inst: &Instance,
    i: usize,
    state: &NetworkState,
    hp: &HyperParams,
    mode: UpdateMode,
) -> Result<PrimalUpdate> {
    let g = local_lagrangian_gradient(inst, i, state, hp)?;
    let u = update_direction(inst, i, mode, &g, &state.x[i], hp)?;
    Ok(PrimalUpdate { agent: i, mode, x_prev: state.x[i].clone(), x_next: &state.x[i] - u })
}

/// `θ ← prox_{g/μ_θ}(x_l + λ/μ_θ)`, then `λ ← λ + μ_θ(x_l − θ)`.
pub fn regularizer_step(state: &mut NetworkState, hp: &HyperParams, reg: &Regularizer) {
    let xl = &state.x[hp.selector];
    let theta = prox(reg, &(xl + &state.lambda / hp.mu_theta), hp.mu_theta);
    state.lambda += (xl - &theta) * hp.mu_theta;
    state.theta = theta;
}

/// One iteration of the protocol over the given active set (ascending,
/// duplicate-free). Returns the primal updates in agent order.
///
/// All primal steps read the pre-iteration state; broadcasts are committed
/// together; then the active agents run their dual updates, and agent `l`
/// (if active) updates `(θ, λ)`.
pub fn protocol_step(
    inst: &Instance,
    state: &mut NetworkState,
    active: &[usize],
    hp: &HyperParams,
    modes: &ModeSchedule,
    t: usize,
    freshness: Freshness,
) -> Result<Vec<PrimalUpdate>> {
    let updates =
        active.iter().map(|&i| agent_step(inst, i, state, hp, modes.mode(i, t))).collect::<Result<Vec<_>>>()?;

    let snapshot: Vec<Vec<Vector>> = match freshness {
        Freshness::Snapshot => active
            .iter()
            .map(|&i| state.buffered(&inst.topology, i).map(|v| v.into_iter().cloned().collect()))
            .collect::<Result<_>>()?,
        Freshness::Fresh => Vec::new(),
    };

    for up in &updates {
        state.x[up.agent] = up.x_next.clone();
        state.deliver(&inst.topology, up.agent, &up.x_next);
    }

    let half = 0.5 * hp.mu_z;
    for (pos, &i) in active.iter().enumerate() {
        let mut acc = Vector::zeros(inst.dim());
        match freshness {
            Freshness::Fresh => {
                for xj in state.buffered(&inst.topology, i)? {
                    acc += &state.x[i] - xj;
                }
            }
            Freshness::Snapshot => {
                for xj in &snapshot[pos] {
                    acc += &state.x[i] - xj;
                }
            }
        }
        state.phi[i] += acc * half;
    }

    if active.contains(&hp.selector) {
        regularizer_step(state, hp, &inst.regularizer);
    }
    Ok(updates)
}

/// Linearization error of one agent's step and its bound
/// `Π_ii ‖x_next − x_prev‖`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTerm {
    pub e: Vector,
    pub pi: f64,
    pub bound: f64,
}

/// `e_i = ∇f_i(x_prev) − ∇f_i(x_next) + J_ii (x_next − x_prev)` with
/// `Π_ii = M_f` (gradient) or `min{2M_f, (L_f/2)‖Δx‖}` (Newton).
pub fn error_term(
    obj: &LocalObjective,
    x_prev: &Vector,
    x_next: &Vector,
    mode: UpdateMode,
    constants: &ConvexityConstants,
) -> ErrorTerm {
    let step = x_next - x_prev;
    let step_norm = norm(&step);
    let mut e = obj.gradient_difference(x_prev, x_next);
    let pi = match mode {
        UpdateMode::Gradient => constants.big_m_f,
        UpdateMode::Newton => {
            e += obj.hessian(x_prev) * &step;
            (2.0 * constants.big_m_f).min(0.5 * constants.l_f * step_norm)
        }
    };
    ErrorTerm { e, pi, bound: pi * step_norm }
}

/// State of the unreduced three-block iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmReferenceState {
    pub x: Vec<Vector>,
    pub z: Vec<Vector>,
    pub alpha: Vec<Vector>,
    pub beta: Vec<Vector>,
    pub theta: Vector,
    pub lambda: Vector,
}

impl AdmmReferenceState {
    pub fn zeros(inst: &Instance) -> Self {
        let (m, n, d) = (inst.agents(), inst.topology.edge_count(), inst.dim());
        Self {
            x: zeros(d, m),
            z: zeros(d, n),
            alpha: zeros(d, n),
            beta: zeros(d, n),
            theta: Vector::zeros(d),
            lambda: Vector::zeros(d),
        }
    }
}

/// One synchronous step of the linearized three-block iteration: x-step with
/// the hybrid curvature, exact z-minimization, θ-prox, then ascent on
/// `y = [α; β]` and `λ`.
pub fn admm_reference_step(
    inst: &Instance,
    st: &mut AdmmReferenceState,
    hp: &HyperParams,
    modes: &ModeSchedule,
    t: usize,
) -> Result<()> {
    let topo = &inst.topology;
    let (m, d) = (inst.agents(), inst.dim());
    let mu = hp.mu_z;

    // ∇_x L = ∇F(x) + Aᵀy + Sλ + μ_z Aᵀ(Ax − Bz) + μ_θ S(Sᵀx − θ)
    let mut grad: Vec<Vector> = (0..m).map(|i| inst.objectives[i].gradient(&st.x[i])).collect();
    for (k, &(i, j)) in topo.edges().iter().enumerate() {
        grad[i] += &st.alpha[k] + (&st.x[i] - &st.z[k]) * mu;
        grad[j] += &st.beta[k] + (&st.x[j] - &st.z[k]) * mu;
    }
    let l = hp.selector;
    grad[l] += &st.lambda + (&st.x[l] - &st.theta) * hp.mu_theta;

    let mut x_next = Vec::with_capacity(m);
    for (i, g) in grad.iter().enumerate() {
        let u = update_direction(inst, i, modes.mode(i, t), g, &st.x[i], hp)?;
        x_next.push(&st.x[i] - u);
    }
    st.x = x_next;

    // Bᵀy + μ_z Bᵀ(Ax − Bz) = 0 per edge.
    for (k, &(i, j)) in topo.edges().iter().enumerate() {
        st.z[k] = (&st.alpha[k] + &st.beta[k]) / (2.0 * mu) + (&st.x[i] + &st.x[j]) * 0.5;
    }

    st.theta = prox(&inst.regularizer, &(&st.x[l] + &st.lambda / hp.mu_theta), hp.mu_theta);

    for (k, &(i, j)) in topo.edges().iter().enumerate() {
        st.alpha[k] += (&st.x[i] - &st.z[k]) * mu;
        st.beta[k] += (&st.x[j] - &st.z[k]) * mu;
    }
    st.lambda += (&st.x[l] - &st.theta) * hp.mu_theta;
    debug_assert_eq!(st.theta.len(), d);
    Ok(())
}
