//! Random activation schemes: which agents wake up at each iteration, and
//! which edges that induces.
//!
//! Sampling for iteration `t` draws from a ChaCha stream selected by `t`, so
//! a schedule depends only on `(seed, t)` and not on how many draws earlier
//! iterations consumed.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::Topology;

#[derive(Debug, Clone, PartialEq)]
pub enum ActivationKind {
    /// Every agent, every iteration.
    Synchronous,
    /// Exactly one agent, uniformly at random.
    SingleUniform,
    /// Independent coin flip per agent with probability `p_i`.
    PerAgentBernoulli(Vec<f64>),
    /// `⌈C m⌉` agents drawn uniformly without replacement.
    FractionUniform(f64),
    /// Independent exponential clocks with the given rates; the first to
    /// fire is the single active agent.
    PoissonClocks(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationScheme {
    kind: ActivationKind,
    agents: usize,
    seed: u64,
}

/// Active agents and induced active edges at one iteration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivationRecord {
    pub t: usize,
    pub agents: Vec<usize>,
    pub edges: Vec<usize>,
}

/// Marginal activation probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedActivation {
    pub agent: Vec<f64>,
    pub edge: Vec<f64>,
    pub p_min: f64,
}

impl ActivationScheme {
    /// Validates that every agent has positive activation probability.
    pub fn new(kind: ActivationKind, agents: usize, seed: u64) -> Result<Self> {
        if agents == 0 {
            return Err(Error::InvalidArgument("activation scheme needs at least one agent".into()));
        }
        match &kind {
            ActivationKind::Synchronous | ActivationKind::SingleUniform => {}
            ActivationKind::PerAgentBernoulli(p) | ActivationKind::PoissonClocks(p) => {
                if p.len() != agents {
                    return Err(Error::InvalidArgument(format!(
                        "expected {agents} per-agent parameters, got {}",
                        p.len()
                    )));
                }
                if let ActivationKind::PerAgentBernoulli(_) = kind {
                    if let Some(i) = p.iter().position(|&v| !(v <= 1.0)) {
                        return Err(Error::InvalidArgument(format!(
                            "agent {i} activation probability {} exceeds 1",
                            p[i]
                        )));
                    }
                }
                if let Some(agent) = p.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
                    return Err(Error::ZeroActivation { agent });
                }
            }
            ActivationKind::FractionUniform(c) => {
                if !(*c > 0.0 && *c <= 1.0) {
                    return Err(Error::InvalidArgument(format!("active fraction must lie in (0, 1], got {c}")));
                }
            }
        }
        Ok(Self { kind, agents, seed })
    }

    pub fn kind(&self) -> &ActivationKind {
        &self.kind
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of agents drawn by `FractionUniform(c)`.
    pub fn fraction_count(agents: usize, c: f64) -> usize {
        (libm::ceil(c * agents as f64 - 1e-9) as usize).clamp(1, agents)
    }

    fn stream(&self, t: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(t as u64);
        rng
    }

    /// Active agents at iteration `t`, in ascending order.
    pub fn sample_agents(&self, t: usize) -> Vec<usize> {
        let m = self.agents;
        match &self.kind {
            ActivationKind::Synchronous => (0..m).collect(),
            ActivationKind::SingleUniform => vec![self.stream(t).random_range(0..m)],
            ActivationKind::PerAgentBernoulli(p) => {
                let mut rng = self.stream(t);
                (0..m).filter(|&i| rng.random_bool(p[i])).collect()
            }
            ActivationKind::FractionUniform(c) => {
                let k = Self::fraction_count(m, *c);
                let mut picked = rand::seq::index::sample(&mut self.stream(t), m, k).into_vec();
                picked.sort_unstable();
                picked
            }
            ActivationKind::PoissonClocks(rates) => {
                let mut rng = self.stream(t);
                let mut best = (f64::INFINITY, 0);
                for (i, &r) in rates.iter().enumerate() {
                    // 1 − U lies in (0, 1], so the log is finite.
                    let u: f64 = rng.random();
                    let fire = -libm::log(1.0 - u) / r;
                    if fire < best.0 {
                        best = (fire, i);
                    }
                }
                vec![best.1]
            }
        }
    }

    pub fn sample(&self, t: usize, topology: &Topology) -> ActivationRecord {
        let agents = self.sample_agents(t);
        let edges = induced_edge_activation(&agents, topology);
        ActivationRecord { t, agents, edges }
    }

    /// Closed-form marginal probabilities for agents and induced edges.
    pub fn expected_activation(&self, topology: &Topology) -> ExpectedActivation {
        let m = self.agents;
        let (agent, edge): (Vec<f64>, Vec<f64>) = match &self.kind {
            ActivationKind::Synchronous => (vec![1.0; m], vec![1.0; topology.edge_count()]),
            ActivationKind::SingleUniform => {
                let p = 1.0 / m as f64;
                (vec![p; m], vec![2.0 * p; topology.edge_count()])
            }
            ActivationKind::PerAgentBernoulli(p) => {
                let e = topology.edges().iter().map(|&(i, j)| 1.0 - (1.0 - p[i]) * (1.0 - p[j])).collect();
                (p.clone(), e)
            }
            ActivationKind::FractionUniform(c) => {
                let k = Self::fraction_count(m, *c) as f64;
                let mf = m as f64;
                let pe = if m < 2 { 1.0 } else { 1.0 - (mf - k) * (mf - k - 1.0) / (mf * (mf - 1.0)) };
                (vec![k / mf; m], vec![pe; topology.edge_count()])
            }
            ActivationKind::PoissonClocks(rates) => {
                let total: f64 = rates.iter().sum();
                let a: Vec<f64> = rates.iter().map(|r| r / total).collect();
                let e = topology.edges().iter().map(|&(i, j)| a[i] + a[j]).collect();
                (a, e)
            }
        };
        let p_min = agent.iter().chain(edge.iter()).copied().fold(f64::INFINITY, f64::min);
        ExpectedActivation { agent, edge, p_min }
    }
}

/// Edge `k = (i, j)` is active iff agent `i` or agent `j` is active.
pub fn induced_edge_activation(active: &[usize], topology: &Topology) -> Vec<usize> {
    let mut on = vec![false; topology.agents()];
    for &i in active {
        on[i] = true;
    }
    topology.edges().iter().enumerate().filter(|(_, &(i, j))| on[i] || on[j]).map(|(k, _)| k).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_incidence, generate_connected_gnp};

    #[test]
    fn synchronous_activates_everything() {
        let t = Topology::ring(5).unwrap();
        let s = ActivationScheme::new(ActivationKind::Synchronous, 5, 0).unwrap();
        let r = s.sample(3, &t);
        assert_eq!(r.agents, vec![0, 1, 2, 3, 4]);
        assert_eq!(r.edges, (0..5).collect::<Vec<_>>());
        let e = s.expected_activation(&t);
        assert_eq!(e.p_min, 1.0);
    }

    #[test]
    fn degenerate_bernoulli_equals_synchronous() {
        let t = Topology::path(4).unwrap();
        let s = ActivationScheme::new(ActivationKind::PerAgentBernoulli(vec![1.0; 4]), 4, 9).unwrap();
        for k in 0..50 {
            assert_eq!(s.sample_agents(k), vec![0, 1, 2, 3]);
        }
        assert_eq!(s.expected_activation(&t).p_min, 1.0);
    }

    #[test]
    fn single_uniform_frequencies_within_binomial_band() {
        let s = ActivationScheme::new(ActivationKind::SingleUniform, 4, 17).unwrap();
        let draws = 10_000;
        let mut counts = [0usize; 4];
        for t in 0..draws {
            let a = s.sample_agents(t);
            assert_eq!(a.len(), 1);
            counts[a[0]] += 1;
        }
        let p: f64 = 0.25;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - draws as f64 * p).abs() <= 3.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn single_uniform_expected_values() {
        let t = Topology::path(4).unwrap();
        let s = ActivationScheme::new(ActivationKind::SingleUniform, 4, 0).unwrap();
        let e = s.expected_activation(&t);
        assert_eq!(e.agent, vec![0.25; 4]);
        assert_eq!(e.edge, vec![0.5; 3]);
        assert_eq!(e.p_min, 0.25);
    }

    #[test]
    fn bernoulli_path_monte_carlo() {
        let t = Topology::path(3).unwrap();
        let s = ActivationScheme::new(ActivationKind::PerAgentBernoulli(vec![0.5; 3]), 3, 5).unwrap();
        let e = s.expected_activation(&t);
        assert_eq!(e.edge, vec![0.75, 0.75]);
        assert_eq!(e.p_min, 0.5);
        let draws = 100_000;
        let mut agent_hits = [0usize; 3];
        let mut edge_hits = [0usize; 2];
        for k in 0..draws {
            let r = s.sample(k, &t);
            for a in r.agents {
                agent_hits[a] += 1;
            }
            for e in r.edges {
                edge_hits[e] += 1;
            }
        }
        let check = |hits: usize, p: f64| {
            let sd = (draws as f64 * p * (1.0 - p)).sqrt();
            assert!((hits as f64 - draws as f64 * p).abs() <= 3.0 * sd);
        };
        agent_hits.iter().for_each(|&h| check(h, 0.5));
        edge_hits.iter().for_each(|&h| check(h, 0.75));
    }

    #[test]
    fn fraction_and_poisson_frequencies() {
        let t = generate_connected_gnp(6, 0.5, 2, 1000).unwrap();
        let schemes = [
            ActivationScheme::new(ActivationKind::FractionUniform(0.5), 6, 1).unwrap(),
            ActivationScheme::new(ActivationKind::PoissonClocks(vec![1.0, 2.0, 0.5, 1.0, 3.0, 1.5]), 6, 1).unwrap(),
        ];
        let draws = 100_000;
        for s in &schemes {
            let e = s.expected_activation(&t);
            let mut a = [0usize; 6];
            let mut ed = vec![0usize; t.edge_count()];
            for k in 0..draws {
                let r = s.sample(k, &t);
                if let ActivationKind::FractionUniform(_) = s.kind() {
                    assert_eq!(r.agents.len(), 3);
                } else {
                    assert_eq!(r.agents.len(), 1);
                }
                r.agents.iter().for_each(|&i| a[i] += 1);
                r.edges.iter().for_each(|&k| ed[k] += 1);
            }
            for (hits, p) in a.iter().zip(&e.agent).chain(ed.iter().zip(&e.edge)) {
                let sd = (draws as f64 * p * (1.0 - p)).sqrt().max(1.0);
                assert!((*hits as f64 - draws as f64 * p).abs() <= 3.0 * sd, "{:?}", s.kind());
            }
        }
    }

    #[test]
    fn induced_edges_match_ceiling_formula() {
        let t = generate_connected_gnp(5, 0.6, 4, 1000).unwrap();
        let inc = build_incidence(&t);
        assert!(induced_edge_activation(&[], &t).is_empty());
        let only: Vec<usize> = t.incident(2).iter().map(|e| e.edge).collect();
        let mut sorted = only.clone();
        sorted.sort_unstable();
        assert_eq!(induced_edge_activation(&[2], &t), sorted);
        for mask in 0u32..32 {
            let active: Vec<usize> = (0..5).filter(|i| mask & (1 << i) != 0).collect();
            let x = nalgebra::DVector::from_fn(5, |i, _| if mask & (1 << i) != 0 { 1.0 } else { 0.0 });
            let y = (&inc.e_u * x) / 2.0;
            let expected: Vec<usize> = (0..t.edge_count()).filter(|&k| libm::ceil(y[k]) == 1.0).collect();
            assert_eq!(induced_edge_activation(&active, &t), expected);
        }
    }

    #[test]
    fn schedules_are_deterministic_per_seed_and_iteration() {
        let s = ActivationScheme::new(ActivationKind::FractionUniform(0.3), 10, 77).unwrap();
        let a: Vec<_> = (0..50).map(|t| s.sample_agents(t)).collect();
        let b: Vec<_> = (0..50).rev().map(|t| s.sample_agents(t)).collect::<Vec<_>>().into_iter().rev().collect();
        assert_eq!(a, b);
        let other = ActivationScheme::new(ActivationKind::FractionUniform(0.3), 10, 78).unwrap();
        assert_ne!(a, (0..50).map(|t| other.sample_agents(t)).collect::<Vec<_>>());
    }

    #[test]
    fn zero_probability_is_rejected() {
        assert_eq!(
            ActivationScheme::new(ActivationKind::PerAgentBernoulli(vec![0.5, 0.0, 0.2]), 3, 0),
            Err(Error::ZeroActivation { agent: 1 })
        );
        assert!(ActivationScheme::new(ActivationKind::PoissonClocks(vec![1.0, 0.0]), 2, 0).is_err());
        assert!(ActivationScheme::new(ActivationKind::FractionUniform(0.0), 2, 0).is_err());
        assert!(ActivationScheme::new(ActivationKind::PerAgentBernoulli(vec![1.5, 0.5]), 2, 0).is_err());
        assert!(ActivationScheme::new(ActivationKind::PerAgentBernoulli(vec![0.5]), 2, 0).is_err());
    }
}
