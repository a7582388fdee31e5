use crate::error::{Error, Result};
use crate::linalg::{norm, sym_eigenvalues, Vector};
use crate::model::{prox, LocalObjective, QuadraticSum, Regularizer};

pub const DEFAULT_ORACLE_TOL: f64 = 1e-12;
pub const ORACLE_ITERATION_CAP: usize = 1_000_000;

/// Centralized minimizer of `Σ_i f_i + g`.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub x: Vector,
    /// `l(x*)`.
    pub value: f64,
    /// `‖x* − prox_{g/L}(x* − ∇(Σf_i)(x*)/L)‖`.
    pub residual: f64,
    pub iterations: usize,
    /// Global gradient Lipschitz constant `L = λ_max(Σ ∇²f_i)`.
    pub lipschitz: f64,
    pub quadratic: QuadraticSum,
}

impl OracleSolution {
    /// `l(x) − l(x*)`, expanded around `x*` to avoid cancellation between
    /// two large objective values.
    pub fn excess(&self, reg: &Regularizer, x: &Vector) -> f64 {
        let dx = x - &self.x;
        let q = &self.quadratic;
        let slope = &q.q * &self.x - &q.c;
        0.5 * dx.dot(&(&q.q * &dx)) + slope.dot(&dx) + reg.value(x) - reg.value(&self.x)
    }

    /// `l(x)` evaluated directly.
    pub fn loss(&self, reg: &Regularizer, x: &Vector) -> f64 {
        self.quadratic.value(x) + reg.value(x)
    }
}

fn fixed_point_residual(q: &QuadraticSum, reg: &Regularizer, lip: f64, x: &Vector) -> f64 {
    let step = x - q.gradient(x) / lip;
    norm(&(x - prox(reg, &step, lip)))
}

/// Accelerated proximal gradient with the strongly convex momentum
/// `(√L − √μ)/(√L + √μ)` and a gradient-based restart.
pub fn solve_centralized(objs: &[LocalObjective], reg: &Regularizer, tol: f64) -> Result<OracleSolution> {
    if objs.is_empty() {
        return Err(Error::InvalidArgument("no local objectives".into()));
    }
    let quadratic = QuadraticSum::new(objs);
    let eig = sym_eigenvalues(&quadratic.q);
    let mu = eig.first().copied().unwrap_or(0.0);
    let lip = eig.last().copied().unwrap_or(0.0);
    if !(lip > 0.0) {
        return Err(Error::InvalidArgument("aggregate Hessian is zero".into()));
    }
    let (sl, sm) = (libm::sqrt(lip), libm::sqrt(mu.max(0.0)));
    let momentum = (sl - sm) / (sl + sm);

    let d = quadratic.c.len();
    let mut x = Vector::zeros(d);
    let mut y = x.clone();
    let mut best = (f64::INFINITY, x.clone());
    for it in 0..ORACLE_ITERATION_CAP {
        let x_next = prox(reg, &(&y - quadratic.gradient(&y) / lip), lip);
        // Restart when the momentum direction opposes the prox-gradient step.
        let restart = (&y - &x_next).dot(&(&x_next - &x)) > 0.0;
        y = if restart { x_next.clone() } else { &x_next + (&x_next - &x) * momentum };
        x = x_next;
        let r = fixed_point_residual(&quadratic, reg, lip, &x);
        if r < best.0 {
            best = (r, x.clone());
        }
        if r <= tol {
            let value = quadratic.value(&x) + reg.value(&x);
            return Ok(OracleSolution { x, value, residual: r, iterations: it + 1, lipschitz: lip, quadratic });
        }
    }
    Err(Error::OracleBudget { iterations: ORACLE_ITERATION_CAP, residual: best.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_objs(seed: u64, m: usize, rows: usize, d: usize, ridge: f64) -> Vec<LocalObjective> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m)
            .map(|_| {
                let a = Matrix::from_fn(rows, d, |_, _| rng.random_range(-1.0..1.0));
                let b = Vector::from_fn(rows, |_, _| rng.random_range(-2.0..2.0));
                LocalObjective::new(a, b, ridge).unwrap()
            })
            .collect()
    }

    #[test]
    fn unregularized_solution_matches_normal_equations() {
        let objs = random_objs(1, 4, 6, 3, 0.2);
        let sol = solve_centralized(&objs, &Regularizer::Zero, DEFAULT_ORACLE_TOL).unwrap();
        let mut q = Matrix::zeros(3, 3);
        let mut c = Vector::zeros(3);
        for o in &objs {
            let (a, b) = o.data();
            q += a.transpose() * a;
            c += a.transpose() * b;
        }
        q += Matrix::identity(3, 3) * (4.0 * 0.2);
        let direct = q.lu().solve(&c).unwrap();
        assert!((&sol.x - direct).amax() < 1e-8);
        assert!(sol.residual <= DEFAULT_ORACLE_TOL);
    }

    #[test]
    fn large_l1_weight_gives_zero() {
        let objs = random_objs(2, 3, 5, 4, 0.0);
        let c = QuadraticSum::new(&objs).c;
        let sol = solve_centralized(&objs, &Regularizer::L1 { gamma: c.amax() }, DEFAULT_ORACLE_TOL).unwrap();
        assert_eq!(sol.x, Vector::zeros(4));
    }

    #[test]
    fn two_dimensional_lasso_matches_grid_search() {
        let objs = random_objs(3, 2, 4, 2, 0.0);
        let reg = Regularizer::L1 { gamma: 0.8 };
        let sol = solve_centralized(&objs, &reg, DEFAULT_ORACLE_TOL).unwrap();
        let quad = QuadraticSum::new(&objs);
        let l = |v: &Vector| quad.value(v) + reg.value(v);
        // Coarse grid, then a 1e-4 grid around the coarse winner.
        let mut best = (f64::INFINITY, Vector::zeros(2));
        let scan = |center: &Vector, half: f64, step: f64, best: &mut (f64, Vector)| {
            let n = (2.0 * half / step).round() as i64;
            for a in 0..=n {
                for b in 0..=n {
                    let v =
                        Vector::from_vec(vec![center[0] - half + a as f64 * step, center[1] - half + b as f64 * step]);
                    let val = l(&v);
                    if val < best.0 {
                        *best = (val, v);
                    }
                }
            }
        };
        scan(&Vector::zeros(2), 4.0, 1e-2, &mut best);
        let coarse = best.1.clone();
        scan(&coarse, 2e-2, 1e-4, &mut best);
        assert!((&sol.x - &best.1).amax() <= 1e-4 + 1e-9, "{} vs {}", sol.x, best.1);
        assert!(sol.value <= best.0 + 1e-12);
    }

    #[test]
    fn excess_is_zero_at_optimum_and_positive_elsewhere() {
        let objs = random_objs(4, 3, 6, 3, 0.0);
        let reg = Regularizer::L1 { gamma: 0.3 };
        let sol = solve_centralized(&objs, &reg, DEFAULT_ORACLE_TOL).unwrap();
        assert_eq!(sol.excess(&reg, &sol.x), 0.0);
        let x = Vector::from_vec(vec![0.1, -0.2, 0.3]);
        let direct = sol.loss(&reg, &x) - sol.value;
        assert!((sol.excess(&reg, &x) - direct).abs() < 1e-10);
        assert!(sol.excess(&reg, &x) > 0.0);
    }
}
