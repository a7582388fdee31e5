//! The edge-level iteration `v⁺ = v + Ω(Tv − v)`: `T` is one synchronous
//! step on `(x, z, α, θ, λ)` and `Ω` keeps the blocks of active agents and
//! induced active edges.

use alloc::vec::Vec;

use super::theory::{lyapunov, LyapunovWeights};
use super::tuple::AnalysisTuple;
use crate::activation::ActivationScheme;
use crate::error::Result;
use crate::model::prox;
use crate::protocol::{update_direction, HyperParams, Instance, ModeSchedule};

/// Full synchronous map `T`. The x-step reads the stored `z`, then
/// `z⁺ = ½E_u x⁺`, `α⁺ = α + (μ_z/2)E_s x⁺`, the θ-prox and the λ ascent.
pub fn operator_map(
    inst: &Instance,
    v: &AnalysisTuple,
    hp: &HyperParams,
    modes: &ModeSchedule,
    t: usize,
) -> Result<AnalysisTuple> {
    let topo = &inst.topology;
    let m = inst.agents();
    let mu = hp.mu_z;
    let mut grad: Vec<_> = (0..m).map(|i| inst.objectives[i].gradient(&v.x[i])).collect();
    for (k, &(i, j)) in topo.edges().iter().enumerate() {
        grad[i] += &v.alpha[k] + (&v.x[i] - &v.z[k]) * mu;
        grad[j] += -&v.alpha[k] + (&v.x[j] - &v.z[k]) * mu;
    }
    let l = hp.selector;
    grad[l] += &v.lambda + (&v.x[l] - &v.theta) * hp.mu_theta;

    let x = (0..m)
        .map(|i| Ok(&v.x[i] - update_direction(inst, i, modes.mode(i, t), &grad[i], &v.x[i], hp)?))
        .collect::<Result<Vec<_>>>()?;
    let z = topo.edges().iter().map(|&(i, j)| (&x[i] + &x[j]) * 0.5).collect();
    let alpha =
        topo.edges().iter().enumerate().map(|(k, &(i, j))| &v.alpha[k] + (&x[i] - &x[j]) * (0.5 * mu)).collect();
    let theta = prox(&inst.regularizer, &(&x[l] + &v.lambda / hp.mu_theta), hp.mu_theta);
    let lambda = &v.lambda + (&x[l] - &theta) * hp.mu_theta;
    Ok(AnalysisTuple { x, z, alpha, theta, lambda })
}

/// Applies `T` on the active agent and edge blocks only; `(θ, λ)` move with
/// the selector agent.
#[allow(clippy::too_many_arguments)]
pub fn operator_step(
    inst: &Instance,
    v: &mut AnalysisTuple,
    hp: &HyperParams,
    modes: &ModeSchedule,
    t: usize,
    agents: &[usize],
    edges: &[usize],
) -> Result<()> {
    let mut next = operator_map(inst, v, hp, modes, t)?;
    for &i in agents {
        core::mem::swap(&mut v.x[i], &mut next.x[i]);
    }
    for &k in edges {
        core::mem::swap(&mut v.z[k], &mut next.z[k]);
        core::mem::swap(&mut v.alpha[k], &mut next.alpha[k]);
    }
    if agents.contains(&hp.selector) {
        v.theta = next.theta;
        v.lambda = next.lambda;
    }
    Ok(())
}

/// Weighted distance to `star` at `t = 0..=iterations`, starting from the
/// all-zero tuple and sampling activations from `scheme`.
pub fn lyapunov_trajectory(
    inst: &Instance,
    hp: &HyperParams,
    modes: &ModeSchedule,
    scheme: &ActivationScheme,
    star: &AnalysisTuple,
    weights: &LyapunovWeights,
    iterations: usize,
) -> Result<Vec<f64>> {
    let mut v = AnalysisTuple::zeros(inst);
    let mut out = Vec::with_capacity(iterations + 1);
    out.push(lyapunov(&v, star, weights));
    for t in 0..iterations {
        let rec = scheme.sample(t, &inst.topology);
        operator_step(inst, &mut v, hp, modes, t, &rec.agents, &rec.edges)?;
        out.push(lyapunov(&v, star, weights));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::{ActivationKind, ActivationScheme};
    use crate::analysis::{
        contraction_check, error_identity_residual, kkt_residuals, solve_centralized, theoretical_eta, OracleSolution,
        DEFAULT_ORACLE_TOL,
    };
    use crate::graph::{spectral_constants, Topology};
    use crate::linalg::max_abs_diff_blocks;
    use crate::model::Regularizer;
    use crate::protocol::{protocol_step, Freshness, NetworkState};
    use crate::testkit::random_instance;

    fn setup(topo: Topology, q: f64) -> (Instance, HyperParams, ModeSchedule, OracleSolution, AnalysisTuple) {
        let m = topo.agents();
        let inst = random_instance(topo, 10, 2, Regularizer::L1 { gamma: 0.5 }, 7);
        let hp = HyperParams::theorem(1.0, inst.constants.big_m_f);
        let modes = ModeSchedule::newton_fraction(m, q, 1).unwrap();
        let oracle = solve_centralized(&inst.objectives, &inst.regularizer, DEFAULT_ORACLE_TOL).unwrap();
        let star = AnalysisTuple::star(&inst, &hp, &oracle).unwrap();
        (inst, hp, modes, oracle, star)
    }

    #[test]
    fn star_is_a_fixed_point_with_small_kkt_residuals() {
        let (inst, hp, modes, _, star) = setup(Topology::ring(5).unwrap(), 0.4);
        assert!(kkt_residuals(&inst, &star, hp.selector).max() <= 1e-8);
        let next = operator_map(&inst, &star, &hp, &modes, 0).unwrap();
        assert!(next.distance_sq(&star).sqrt() <= 1e-8);
    }

    #[test]
    fn synchronous_operator_tracks_protocol() {
        let (inst, hp, modes, _, _) = setup(Topology::ring(5).unwrap(), 0.6);
        let mut v = AnalysisTuple::zeros(&inst);
        let mut s = NetworkState::zeros(&inst.topology, 2);
        let all: Vec<usize> = (0..5).collect();
        let edges: Vec<usize> = (0..inst.topology.edge_count()).collect();
        for t in 0..60 {
            operator_step(&inst, &mut v, &hp, &modes, t, &all, &edges).unwrap();
            protocol_step(&inst, &mut s, &all, &hp, &modes, t, Freshness::Fresh).unwrap();
            assert!(max_abs_diff_blocks(&v.x, &s.x) <= 1e-10);
            assert!(max_abs_diff_blocks(&v.phi(&inst), &s.phi) <= 1e-10);
            assert!((&v.theta - &s.theta).amax() <= 1e-10);
            assert!((&v.lambda - &s.lambda).amax() <= 1e-10);
            let half_eu: Vec<_> = inst.topology.edges().iter().map(|&(i, j)| (&v.x[i] + &v.x[j]) * 0.5).collect();
            assert!(max_abs_diff_blocks(&v.z, &half_eu) <= 1e-12);
        }
    }

    #[test]
    fn error_identity_holds_along_synchronous_iterates() {
        let (inst, hp, modes, _, star) = setup(Topology::path(4).unwrap(), 0.5);
        let mut v = AnalysisTuple::zeros(&inst);
        let all: Vec<usize> = (0..4).collect();
        let edges: Vec<usize> = (0..3).collect();
        for t in 0..40 {
            let prev = v.clone();
            operator_step(&inst, &mut v, &hp, &modes, t, &all, &edges).unwrap();
            assert!(error_identity_residual(&inst, &hp, &modes, t, &prev, &v, &star) <= 1e-9);
        }
    }

    #[test]
    fn inactive_blocks_are_untouched() {
        let (inst, hp, modes, _, _) = setup(Topology::path(4).unwrap(), 0.0);
        let mut v = AnalysisTuple::zeros(&inst);
        operator_step(&inst, &mut v, &hp, &modes, 0, &[0, 1, 2, 3], &[0, 1, 2]).unwrap();
        let before = v.clone();
        operator_step(&inst, &mut v, &hp, &modes, 1, &[3], &[2]).unwrap();
        assert_eq!(v.x[..3], before.x[..3]);
        assert_eq!(v.z[..2], before.z[..2]);
        assert_eq!(v.alpha[..2], before.alpha[..2]);
        assert_eq!((&v.theta, &v.lambda), (&before.theta, &before.lambda));
        assert_ne!(v.x[3], before.x[3]);
    }

    #[test]
    fn synchronous_lyapunov_decays_geometrically() {
        let (inst, hp, modes, _, star) = setup(Topology::path(4).unwrap(), 1.0);
        let scheme = ActivationScheme::new(ActivationKind::Synchronous, 4, 0).unwrap();
        let act = scheme.expected_activation(&inst.topology);
        let spectral = spectral_constants(&inst.incidence, 0).unwrap();
        let tc = theoretical_eta(&inst.constants, &spectral, &hp, act.p_min).unwrap();
        let w = LyapunovWeights::new(&tc, &act, 0).unwrap();
        let run = lyapunov_trajectory(&inst, &hp, &modes, &scheme, &star, &w, 60).unwrap();
        let rep = contraction_check(&[run], tc.rate);
        assert!(rep.slope < 0.0);
        assert!(rep.passes(0.05), "{rep:?}");
    }

    #[test]
    fn single_agent_activation_contracts_in_expectation() {
        for q in [0.0, 1.0] {
            let (inst, hp, modes, _, star) = setup(Topology::path(4).unwrap(), q);
            let spectral = spectral_constants(&inst.incidence, 0).unwrap();
            let runs: Vec<Vec<f64>> = (0..20)
                .map(|seed| {
                    let scheme = ActivationScheme::new(ActivationKind::SingleUniform, 4, seed).unwrap();
                    let act = scheme.expected_activation(&inst.topology);
                    let tc = theoretical_eta(&inst.constants, &spectral, &hp, act.p_min).unwrap();
                    let w = LyapunovWeights::new(&tc, &act, 0).unwrap();
                    lyapunov_trajectory(&inst, &hp, &modes, &scheme, &star, &w, 200).unwrap()
                })
                .collect();
            let tc = theoretical_eta(&inst.constants, &spectral, &hp, 0.25).unwrap();
            let rep = contraction_check(&runs, tc.rate);
            assert!(rep.passes(0.05), "q = {q}: {} exceed, slope {}", rep.exceed_fraction, rep.slope);
        }
    }
}
