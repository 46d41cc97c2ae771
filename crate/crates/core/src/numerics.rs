//! Small numerical helpers shared by the convergence checks.

/// Least-squares slope of `log y` against `log x`.
///
/// Pairs with a non-positive or non-finite coordinate are skipped; `None` if
/// fewer than two usable pairs remain.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

/// Slopes between consecutive pairs, `NaN` where undefined. The first entry
/// is always `NaN`.
pub fn running_slopes(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let mut out = vec![f64::NAN; xs.len()];
    for i in 1..xs.len() {
        if let Some(s) = loglog_slope(&xs[i - 1..=i], &ys[i - 1..=i]) {
            out[i] = s;
        }
    }
    out
}
