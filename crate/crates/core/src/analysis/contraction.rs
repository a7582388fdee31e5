use alloc::vec::Vec;

/// Iterations where some run's value has fallen below this fraction of its
/// starting value are excluded from the ratio statistics.
const RELATIVE_FLOOR: f64 = 1e-20;

/// Seed-averaged one-step ratio `V(t+1)/V(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioRow {
    pub t: usize,
    pub mean_ratio: f64,
    pub std_err: f64,
    pub exceeds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionReport {
    pub bound: f64,
    pub rows: Vec<RatioRow>,
    /// Share of evaluated iterations with `mean > bound + 3·SE`.
    pub exceed_fraction: f64,
    /// Least-squares slope of `ln mean_k V_k(t)` against `t`.
    pub slope: f64,
    /// Every run starts at the reference point, so no ratio is defined.
    pub converged_at_start: bool,
}

impl ContractionReport {
    pub fn passes(&self, max_exceed_fraction: f64) -> bool {
        !self.converged_at_start && self.exceed_fraction <= max_exceed_fraction && self.slope < 0.0
    }
}

/// `runs[k][t]` is the Lyapunov value of run `k` at iteration `t`; all runs
/// must have the same length.
pub fn contraction_check(runs: &[Vec<f64>], bound: f64) -> ContractionReport {
    let len = runs.iter().map(Vec::len).min().unwrap_or(0);
    let converged_at_start = runs.iter().all(|r| r.first().is_none_or(|&v| v == 0.0));
    let empty = ContractionReport { bound, rows: Vec::new(), exceed_fraction: 0.0, slope: 0.0, converged_at_start };
    if converged_at_start || len < 2 {
        return empty;
    }
    let k = runs.len() as f64;
    let floors: Vec<f64> = runs.iter().map(|r| RELATIVE_FLOOR * r[0]).collect();

    let mut rows = Vec::new();
    for t in 0..len - 1 {
        if runs.iter().zip(&floors).any(|(r, &f)| !(r[t] > f)) {
            continue;
        }
        let ratios: Vec<f64> = runs.iter().map(|r| r[t + 1] / r[t]).collect();
        let mean = ratios.iter().sum::<f64>() / k;
        let var =
            if runs.len() > 1 { ratios.iter().map(|q| (q - mean) * (q - mean)).sum::<f64>() / (k - 1.0) } else { 0.0 };
        let std_err = libm::sqrt(var / k);
        rows.push(RatioRow { t, mean_ratio: mean, std_err, exceeds: mean > bound + 3.0 * std_err });
    }
    let exceed_fraction =
        if rows.is_empty() { 0.0 } else { rows.iter().filter(|r| r.exceeds).count() as f64 / rows.len() as f64 };

    let top = runs.iter().map(|r| r[0]).sum::<f64>() / k;
    let pts: Vec<(f64, f64)> = (0..len)
        .map(|t| (t as f64, runs.iter().map(|r| r[t]).sum::<f64>() / k))
        .filter(|&(_, v)| v > RELATIVE_FLOOR * top)
        .collect();
    ContractionReport { bound, rows, exceed_fraction, slope: log_slope(&pts), converged_at_start }
}

/// Least-squares slope of `ln v` against `t` over the points with `v > 0`;
/// zero with fewer than two such points.
pub fn log_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> =
        points.iter().filter(|p| p.1 > 0.0 && p.1.is_finite()).map(|&(t, v)| (t, libm::log(v))).collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}
