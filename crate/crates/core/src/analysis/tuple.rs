use alloc::vec::Vec;

use super::oracle::OracleSolution;
use crate::error::Result;
use crate::linalg::{norm_sq_blocks, spd_solve, zeros, Matrix, Vector};
use crate::protocol::{error_term, HyperParams, Instance, ModeSchedule, NetworkState};

/// Edge-level analysis variables `v_α = [x; z; α; θ; λ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisTuple {
    pub x: Vec<Vector>,
    pub z: Vec<Vector>,
    pub alpha: Vec<Vector>,
    pub theta: Vector,
    pub lambda: Vector,
}

impl AnalysisTuple {
    pub fn zeros(inst: &Instance) -> Self {
        let (m, n, d) = (inst.agents(), inst.topology.edge_count(), inst.dim());
        Self { x: zeros(d, m), z: zeros(d, n), alpha: zeros(d, n), theta: Vector::zeros(d), lambda: Vector::zeros(d) }
    }

    /// Saddle point lifted from the centralized solution: consensus at `x*`,
    /// `z* = x*` on every edge, `θ* = x*`, `λ* = −Σ_i ∇f_i(x*)`, and `α*` the
    /// minimum-norm solution of `E_sᵀα = −∇F(x*) − Sλ*`.
    pub fn star(inst: &Instance, hp: &HyperParams, oracle: &OracleSolution) -> Result<Self> {
        let (m, d) = (inst.agents(), inst.dim());
        let xs = &oracle.x;
        let grads: Vec<Vector> = inst.objectives.iter().map(|o| o.gradient(xs)).collect();
        let lambda = -grads.iter().fold(Vector::zeros(d), |acc, g| acc + g);

        // rhs_i = −∇f_i(x*) − δ_il λ*, which sums to zero over agents.
        let mut rhs = Matrix::zeros(m, d);
        for (i, g) in grads.iter().enumerate() {
            let mut r = -g;
            if i == hp.selector {
                r -= &lambda;
            }
            rhs.set_row(i, &r.transpose());
        }
        // (L_s + 𝟙𝟙ᵀ/m) y = rhs has y ⊥ 𝟙 and L_s y = rhs for rhs ⊥ 𝟙;
        // then α = E_s y lies in range(E_s), the min-norm solution.
        let shifted = &inst.incidence.l_s + Matrix::from_element(m, m, 1.0 / m as f64);
        let mut y = Matrix::zeros(m, d);
        for c in 0..d {
            let col =
                spd_solve(shifted.clone(), &rhs.column(c).into_owned()).ok_or(crate::error::Error::Disconnected)?;
            y.set_column(c, &col);
        }
        let alpha_mat = &inst.incidence.e_s * y;
        let alpha = (0..inst.topology.edge_count()).map(|k| alpha_mat.row(k).transpose()).collect();
        Ok(Self {
            x: (0..m).map(|_| xs.clone()).collect(),
            z: (0..inst.topology.edge_count()).map(|_| xs.clone()).collect(),
            alpha,
            theta: xs.clone(),
            lambda,
        })
    }

    /// `φ = E_sᵀα`.
    pub fn phi(&self, inst: &Instance) -> Vec<Vector> {
        let mut phi = zeros(inst.dim(), inst.agents());
        for (k, &(i, j)) in inst.topology.edges().iter().enumerate() {
            phi[i] += &self.alpha[k];
            phi[j] -= &self.alpha[k];
        }
        phi
    }

    pub fn distance_sq(&self, other: &Self) -> f64 {
        let diff = |a: &[Vector], b: &[Vector]| a.iter().zip(b).map(|(u, v)| (u - v).norm_squared()).sum::<f64>();
        diff(&self.x, &other.x)
            + diff(&self.z, &other.z)
            + diff(&self.alpha, &other.alpha)
            + (&self.theta - &other.theta).norm_squared()
            + (&self.lambda - &other.lambda).norm_squared()
    }
}

/// Norms of the optimality conditions of the lifted problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    /// `‖∇F(x) + E_sᵀα + Sλ‖`.
    pub stationarity: f64,
    /// `‖E_s x‖`.
    pub consensus: f64,
    /// `‖E_u x − 2z‖`.
    pub edge: f64,
    /// `‖Sᵀx − θ‖`.
    pub selector: f64,
    /// Distance from `λ` to `∂g(θ)`.
    pub subgradient: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        [self.stationarity, self.consensus, self.edge, self.selector, self.subgradient].into_iter().fold(0.0, f64::max)
    }
}

fn stationarity_and_consensus(inst: &Instance, x: &[Vector], phi: &[Vector], lambda: &Vector, l: usize) -> (f64, f64) {
    let mut st = 0.0;
    for i in 0..inst.agents() {
        let mut r = inst.objectives[i].gradient(&x[i]) + &phi[i];
        if i == l {
            r += lambda;
        }
        st += r.norm_squared();
    }
    let cons: f64 = inst.topology.edges().iter().map(|&(i, j)| (&x[i] - &x[j]).norm_squared()).sum();
    (libm::sqrt(st), libm::sqrt(cons))
}

pub fn kkt_residuals(inst: &Instance, v: &AnalysisTuple, selector: usize) -> KktResiduals {
    let phi = v.phi(inst);
    let (stationarity, consensus) = stationarity_and_consensus(inst, &v.x, &phi, &v.lambda, selector);
    let edge: f64 = inst
        .topology
        .edges()
        .iter()
        .enumerate()
        .map(|(k, &(i, j))| (&v.x[i] + &v.x[j] - &v.z[k] * 2.0).norm_squared())
        .sum();
    KktResiduals {
        stationarity,
        consensus,
        edge: libm::sqrt(edge),
        selector: (&v.x[selector] - &v.theta).norm(),
        subgradient: inst.regularizer.subdifferential_distance(&v.theta, &v.lambda),
    }
}

/// Residuals of the implementation state, with `φ` standing in for `E_sᵀα`
/// and `z` implicitly equal to `½E_u x`.
pub fn kkt_residuals_network(inst: &Instance, s: &NetworkState, selector: usize) -> KktResiduals {
    let (stationarity, consensus) = stationarity_and_consensus(inst, &s.x, &s.phi, &s.lambda, selector);
    KktResiduals {
        stationarity,
        consensus,
        edge: 0.0,
        selector: (&s.x[selector] - &s.theta).norm(),
        subgradient: inst.regularizer.subdifferential_distance(&s.theta, &s.lambda),
    }
}

/// Norm of
/// `e + ∇F(x⁺) − ∇F(x*) + Δ(x⁺ − x) + E_sᵀ(α⁺ − α*) + μ_z E_uᵀ(z⁺ − z)
///  + S(λ⁺ − λ* + μ_θ(θ⁺ − θ))`
/// for one synchronous transition `prev → next`; zero along exact iterates.
pub fn error_identity_residual(
    inst: &Instance,
    hp: &HyperParams,
    modes: &ModeSchedule,
    t: usize,
    prev: &AnalysisTuple,
    next: &AnalysisTuple,
    star: &AnalysisTuple,
) -> f64 {
    let m = inst.agents();
    let mut res: Vec<Vector> = (0..m)
        .map(|i| {
            let mode = modes.mode(i, t);
            let obj = &inst.objectives[i];
            let e = error_term(obj, &prev.x[i], &next.x[i], mode, &inst.constants).e;
            e + obj.gradient_difference(&next.x[i], &star.x[i]) + (&next.x[i] - &prev.x[i]) * hp.delta_for(i, mode)
        })
        .collect();
    for (k, &(i, j)) in inst.topology.edges().iter().enumerate() {
        let da = &next.alpha[k] - &star.alpha[k];
        res[i] += &da;
        res[j] -= &da;
        let dz = (&next.z[k] - &prev.z[k]) * hp.mu_z;
        res[i] += &dz;
        res[j] += &dz;
    }
    let l = hp.selector;
    res[l] += &next.lambda - &star.lambda + (&next.theta - &prev.theta) * hp.mu_theta;
    libm::sqrt(norm_sq_blocks(&res))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{solve_centralized, DEFAULT_ORACLE_TOL};
    use crate::graph::Topology;
    use crate::model::{LocalObjective, Regularizer};
    use crate::protocol::UpdateMode;
    use crate::testkit::random_instance;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_state_with_zero_gradients_has_zero_residuals() {
        let objs =
            (0..3).map(|_| LocalObjective::new(Matrix::identity(2, 2), Vector::zeros(2), 0.0).unwrap()).collect();
        let inst = Instance::new(Topology::path(3).unwrap(), objs, Regularizer::Zero).unwrap();
        let r = kkt_residuals(&inst, &AnalysisTuple::zeros(&inst), 0);
        assert_eq!(r.max(), 0.0);
        let r = kkt_residuals_network(&inst, &NetworkState::zeros(&inst.topology, 2), 0);
        assert_eq!(r.max(), 0.0);
    }

    #[test]
    fn lifted_optimum_satisfies_kkt() {
        for (topo, reg) in [
            (Topology::path(3).unwrap(), Regularizer::L1 { gamma: 0.4 }),
            (Topology::complete(4).unwrap(), Regularizer::Zero),
            (
                Topology::ring(6).unwrap(),
                Regularizer::Box { lower: Vector::from_element(3, -0.2), upper: Vector::from_element(3, 0.2) },
            ),
        ] {
            let m = topo.agents();
            let inst = random_instance(topo, 8, 3, reg, m as u64);
            let mut hp = HyperParams::theorem(1.0, 1.0);
            hp.selector = m - 1;
            let oracle = solve_centralized(&inst.objectives, &inst.regularizer, DEFAULT_ORACLE_TOL).unwrap();
            let star = AnalysisTuple::star(&inst, &hp, &oracle).unwrap();
            let r = kkt_residuals(&inst, &star, hp.selector);
            assert!(r.max() <= 1e-8, "{r:?}");
            // Minimum norm: α* has no component in the cycle space ker(E_sᵀ).
            let alpha = Matrix::from_fn(inst.topology.edge_count(), 3, |k, c| star.alpha[k][c]);
            let y = &inst.incidence.e_s.transpose() * &alpha;
            let back = &inst.incidence.e_s
                * (&inst.incidence.l_s + Matrix::from_element(m, m, 1.0 / m as f64)).try_inverse().unwrap()
                * y;
            assert!((back - alpha).amax() <= 1e-9);
        }
    }

    #[test]
    fn consensus_residual_matches_per_edge_sum() {
        let inst = random_instance(Topology::ring(5).unwrap(), 4, 2, Regularizer::Zero, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut v = AnalysisTuple::zeros(&inst);
        for x in v.x.iter_mut() {
            *x = Vector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
        }
        let mut direct = 0.0;
        for &(i, j) in inst.topology.edges() {
            direct += (&v.x[i] - &v.x[j]).norm_squared();
        }
        assert!((kkt_residuals(&inst, &v, 0).consensus - direct.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn newton_agents_have_zero_error_term() {
        let inst = random_instance(Topology::path(2).unwrap(), 5, 3, Regularizer::Zero, 1);
        let x0 = Vector::from_vec(vec![0.3, -1.0, 2.0]);
        let x1 = Vector::from_vec(vec![-0.7, 0.4, 0.1]);
        let e = error_term(&inst.objectives[0], &x0, &x1, UpdateMode::Newton, &inst.constants);
        assert!(e.e.amax() <= 1e-12);
        let g = error_term(&inst.objectives[0], &x0, &x1, UpdateMode::Gradient, &inst.constants);
        assert!(g.e.norm() <= g.bound + 1e-12);
    }
}
