//! Local least-squares objectives, the nonsmooth regularizer and its
//! proximal map, and the convexity constants of the local losses.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{sym_eigenvalues, Matrix, Vector};

/// Tolerance under which a Hessian eigenvalue is treated as non-positive.
pub const STRONG_CONVEXITY_TOL: f64 = 1e-12;

/// `f(x) = ½‖A x − b‖² + (ρ/2)‖x‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalObjective {
    a: Matrix,
    b: Vector,
    ridge: f64,
    hessian: Matrix,
    atb: Vector,
}

impl LocalObjective {
    pub fn new(a: Matrix, b: Vector, ridge: f64) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(Error::InvalidArgument(format!(
                "data matrix has {} rows but response has {} entries",
                a.nrows(),
                b.len()
            )));
        }
        if !(ridge >= 0.0) {
            return Err(Error::InvalidArgument(format!("ridge must be non-negative, got {ridge}")));
        }
        let d = a.ncols();
        let hessian = a.transpose() * &a + Matrix::identity(d, d) * ridge;
        let atb = a.transpose() * &b;
        Ok(Self { a, b, ridge, hessian, atb })
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn data(&self) -> (&Matrix, &Vector) {
        (&self.a, &self.b)
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn value(&self, x: &Vector) -> f64 {
        let r = &self.a * x - &self.b;
        0.5 * r.dot(&r) + 0.5 * self.ridge * x.dot(x)
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        &self.hessian * x - &self.atb
    }

    /// The Hessian is constant for least squares; `x` is accepted for
    /// interface symmetry with the update rule.
    pub fn hessian(&self, _x: &Vector) -> &Matrix {
        &self.hessian
    }

    /// `∇f(x) − ∇f(y)`, evaluated as `H (x − y)` so that cancellation
    /// against a Hessian-vector product is exact.
    pub fn gradient_difference(&self, x: &Vector, y: &Vector) -> Vector {
        &self.hessian * (x - y)
    }

    /// `Aᵀb`.
    pub fn linear_term(&self) -> &Vector {
        &self.atb
    }

    /// Lipschitz constant of the Hessian (zero for quadratics).
    pub fn hessian_lipschitz(&self) -> f64 {
        0.0
    }
}

/// Constants of the strong convexity / smoothness assumptions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexityConstants {
    pub m_f: f64,
    pub big_m_f: f64,
    pub l_f: f64,
}

pub fn estimate_constants(objs: &[LocalObjective]) -> Result<ConvexityConstants> {
    if objs.is_empty() {
        return Err(Error::InvalidArgument("no local objectives".into()));
    }
    let mut m_f = f64::INFINITY;
    let mut big_m_f = 0.0f64;
    let mut l_f = 0.0f64;
    for (i, obj) in objs.iter().enumerate() {
        let eig = sym_eigenvalues(&obj.hessian);
        let lo = eig.first().copied().unwrap_or(0.0);
        let hi = eig.last().copied().unwrap_or(0.0);
        if lo <= STRONG_CONVEXITY_TOL {
            return Err(Error::NotStronglyConvex { agent: i, lambda_min: lo });
        }
        m_f = m_f.min(lo);
        big_m_f = big_m_f.max(hi);
        l_f = l_f.max(obj.hessian_lipschitz());
    }
    Ok(ConvexityConstants { m_f, big_m_f, l_f })
}

/// Sum of the local objectives as a single quadratic
/// `½ xᵀQx − cᵀx + κ`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSum {
    pub q: Matrix,
    pub c: Vector,
    pub constant: f64,
}

impl QuadraticSum {
    pub fn new(objs: &[LocalObjective]) -> Self {
        let d = objs.first().map_or(0, LocalObjective::dim);
        let mut q = Matrix::zeros(d, d);
        let mut c = Vector::zeros(d);
        let mut constant = 0.0;
        for obj in objs {
            q += &obj.hessian;
            c += &obj.atb;
            constant += 0.5 * obj.b.dot(&obj.b);
        }
        Self { q, c, constant }
    }

    pub fn value(&self, x: &Vector) -> f64 {
        0.5 * x.dot(&(&self.q * x)) - self.c.dot(x) + self.constant
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        &self.q * x - &self.c
    }
}

/// Convex regularizer `g` applied to the selector copy `θ`.
#[derive(Debug, Clone, PartialEq)]
pub enum Regularizer {
    Zero,
    /// `γ‖x‖₁`.
    L1 {
        gamma: f64,
    },
    /// Indicator of the box `lower ≤ x ≤ upper`.
    Box {
        lower: Vector,
        upper: Vector,
    },
}

impl Regularizer {
    pub fn validate(&self, d: usize) -> Result<()> {
        match self {
            Regularizer::Zero => Ok(()),
            Regularizer::L1 { gamma } if *gamma >= 0.0 => Ok(()),
            Regularizer::L1 { gamma } => {
                Err(Error::InvalidArgument(format!("l1 weight must be non-negative, got {gamma}")))
            }
            Regularizer::Box { lower, upper } => {
                if lower.len() != d || upper.len() != d {
                    return Err(Error::InvalidArgument(format!("box bounds must have dimension {d}")));
                }
                if lower.iter().zip(upper.iter()).any(|(l, u)| !(l <= u)) {
                    return Err(Error::InvalidArgument("box lower bound exceeds upper bound".into()));
                }
                Ok(())
            }
        }
    }

    /// `g(x)`; the box indicator is `+∞` outside the box.
    pub fn value(&self, x: &Vector) -> f64 {
        match self {
            Regularizer::Zero => 0.0,
            Regularizer::L1 { gamma } => gamma * x.lp_norm(1),
            Regularizer::Box { lower, upper } => {
                let inside = x.iter().zip(lower.iter().zip(upper.iter())).all(|(v, (l, u))| l <= v && v <= u);
                if inside {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Distance from `lambda` to the subdifferential `∂g(theta)`.
    pub fn subdifferential_distance(&self, theta: &Vector, lambda: &Vector) -> f64 {
        let mut acc = 0.0;
        for k in 0..theta.len() {
            let (t, l) = (theta[k], lambda[k]);
            let gap = match self {
                Regularizer::Zero => l.abs(),
                Regularizer::L1 { gamma } => {
                    if t > 0.0 {
                        (l - gamma).abs()
                    } else if t < 0.0 {
                        (l + gamma).abs()
                    } else {
                        (l.abs() - gamma).max(0.0)
                    }
                }
                Regularizer::Box { lower, upper } => {
                    let (lo, hi) = (lower[k], upper[k]);
                    if t < lo || t > hi {
                        f64::INFINITY
                    } else if lo == hi {
                        0.0
                    } else if t == hi {
                        (-l).max(0.0)
                    } else if t == lo {
                        l.max(0.0)
                    } else {
                        l.abs()
                    }
                }
            };
            acc += gap * gap;
        }
        libm::sqrt(acc)
    }
}

/// `prox_{g/μ}(x) = argmin_v g(v) + (μ/2)‖v − x‖²`.
pub fn prox(reg: &Regularizer, x: &Vector, mu: f64) -> Vector {
    debug_assert!(mu > 0.0);
    match reg {
        Regularizer::Zero => x.clone(),
        Regularizer::L1 { gamma } => {
            let thr = gamma / mu;
            x.map(|v| soft_threshold(v, thr))
        }
        Regularizer::Box { lower, upper } => {
            Vector::from_iterator(x.len(), (0..x.len()).map(|k| x[k].clamp(lower[k], upper[k])))
        }
    }
}

pub fn soft_threshold(v: f64, thr: f64) -> f64 {
    if v > thr {
        v - thr
    } else if v < -thr {
        v + thr
    } else {
        0.0
    }
}

/// Default l1 weight, `0.1 · ‖Σ A_iᵀ b_i‖_∞`.
pub fn default_l1_weight(objs: &[LocalObjective]) -> f64 {
    0.1 * QuadraticSum::new(objs).c.amax()
}

/// Per-agent objective values as a vector, handy for diagnostics.
pub fn local_values(objs: &[LocalObjective], x: &[Vector]) -> Vec<f64> {
    objs.iter().zip(x).map(|(o, xi)| o.value(xi)).collect()
}
