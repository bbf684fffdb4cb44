//! Geometric-rate fits shared by the decay estimator and the cocycle energies.

/// Least-squares slope of `ln(value)` against the index over the trailing
/// `ceil(len / 2)` samples, exponentiated into a per-step ratio.
///
/// Samples must be positive; returns `None` when fewer than two samples are
/// used or any used value is not strictly positive.
pub fn tail_geometric_rate(points: &[(f64, f64)]) -> Option<f64> {
    let used = points.len().div_ceil(2);
    if used < 2 {
        return None;
    }
    let tail = &points[points.len() - used..];
    if tail.iter().any(|&(_, v)| !v.is_finite() || v <= 0.0) {
        return None;
    }
    let n = tail.len() as f64;
    let mx = tail.iter().map(|p| p.0).sum::<f64>() / n;
    let my = tail.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for &(x, v) in tail {
        sxy += (x - mx) * (v.ln() - my);
        sxx += (x - mx) * (x - mx);
    }
    if sxx == 0.0 {
        return None;
    }
    Some((sxy / sxx).exp())
}
