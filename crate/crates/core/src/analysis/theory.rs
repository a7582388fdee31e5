use alloc::format;
use alloc::vec::Vec;

use super::tuple::AnalysisTuple;
use crate::activation::ExpectedActivation;
use crate::error::{Error, Result};
use crate::graph::SpectralConstants;
use crate::model::ConvexityConstants;
use crate::protocol::HyperParams;

/// Certified contraction coefficient and the Lyapunov scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoremConstants {
    pub eta: f64,
    /// The five candidates of the min, in order; the ε-term is `+∞` when
    /// `ε = 0`.
    pub terms: [f64; 5],
    pub epsilon_term_dropped: bool,
    pub p_min: f64,
    /// `1 − p_min η/(1+η)`.
    pub rate: f64,
    /// Block weights `[ε, 2μ_z, 2/μ_z, μ_θ, 1/μ_θ]` for `(x, z, α, θ, λ)`.
    pub scaling: [f64; 5],
}

pub fn theoretical_eta(
    c: &ConvexityConstants,
    s: &SpectralConstants,
    hp: &HyperParams,
    p_min: f64,
) -> Result<TheoremConstants> {
    hp.check_theorem_mode()?;
    if !(p_min > 0.0 && p_min <= 1.0) {
        return Err(Error::InvalidArgument(format!("p_min must lie in (0, 1], got {p_min}")));
    }
    let (mf, big) = (c.m_f, c.big_m_f);
    let (eps, mt) = (hp.epsilon, hp.mu_theta);
    let sp = s.sigma_min_plus;
    let terms = [
        2.0 * mf * big / (mf + big) / (eps + mt * (s.sigma_max_lu + 2.0)),
        0.5,
        0.4 * mt * sp / (mf + big),
        if eps > 0.0 { mt * sp / (5.0 * eps) } else { f64::INFINITY },
        sp / (5.0 * s.sigma_max_lu.max(1.0)),
    ];
    let eta = terms.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(TheoremConstants {
        eta,
        terms,
        epsilon_term_dropped: eps == 0.0,
        p_min,
        rate: 1.0 - p_min * eta / (1.0 + eta),
        scaling: [eps, 2.0 * hp.mu_z, 2.0 / hp.mu_z, mt, 1.0 / mt],
    })
}

/// Diagonal of `𝓗Ω⁻¹`, one weight per block.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovWeights {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub alpha: Vec<f64>,
    pub theta: f64,
    pub lambda: f64,
}

impl LyapunovWeights {
    pub fn new(tc: &TheoremConstants, act: &ExpectedActivation, selector: usize) -> Result<Self> {
        if let Some(agent) = act.agent.iter().position(|&p| !(p > 0.0)) {
            return Err(Error::ZeroActivation { agent });
        }
        if let Some(k) = act.edge.iter().position(|&p| !(p > 0.0)) {
            return Err(Error::InvalidArgument(format!("edge {k} is never activated")));
        }
        let [sx, sz, sa, st, sl] = tc.scaling;
        let pl = act.agent[selector];
        Ok(Self {
            x: act.agent.iter().map(|p| sx / p).collect(),
            z: act.edge.iter().map(|p| sz / p).collect(),
            alpha: act.edge.iter().map(|p| sa / p).collect(),
            theta: st / pl,
            lambda: sl / pl,
        })
    }
}

/// `‖v − v*‖²` in the `𝓗Ω⁻¹` norm.
pub fn lyapunov(v: &AnalysisTuple, star: &AnalysisTuple, w: &LyapunovWeights) -> f64 {
    let blocks = |a: &[crate::linalg::Vector], b: &[crate::linalg::Vector], wt: &[f64]| {
        a.iter().zip(b).zip(wt).map(|((u, s), c)| c * (u - s).norm_squared()).sum::<f64>()
    };
    blocks(&v.x, &star.x, &w.x)
        + blocks(&v.z, &star.z, &w.z)
        + blocks(&v.alpha, &star.alpha, &w.alpha)
        + w.theta * (&v.theta - &star.theta).norm_squared()
        + w.lambda * (&v.lambda - &star.lambda).norm_squared()
}
