//! Small statistics helpers used for run summaries and sweeps.

/// Sample mean and standard error of the mean (`s / sqrt(n)`, `n - 1` in the
/// variance). One sample has zero standard error; none gives `NaN`s.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Ordinary least-squares slope and intercept of `y` on `x`.
pub fn ols(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Slope of `ln C_k` against `ln k` over the second half of the episodes,
/// skipping episodes where the cumulative value is not positive.
pub fn loglog_slope(cumulative: &[f64]) -> Option<f64> {
    let k_total = cumulative.len();
    let (xs, ys): (Vec<f64>, Vec<f64>) = cumulative
        .iter()
        .enumerate()
        .skip(k_total / 2)
        .filter(|(_, &c)| c > 0.0)
        .map(|(i, &c)| (((i + 1) as f64).ln(), c.ln()))
        .unzip();
    ols(&xs, &ys).map(|(slope, _)| slope)
}

/// Least-squares fit of `y = a x^2 + b x` (no intercept). Returns `(a, b, r2)`
/// with `r2` measured against the mean of `y`.
pub fn fit_quadratic_no_intercept(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    if x.len() < 2 || x.len() != y.len() {
        return None;
    }
    let (mut s44, mut s33, mut s22, mut s2y, mut s1y) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        s44 += xi.powi(4);
        s33 += xi.powi(3);
        s22 += xi * xi;
        s2y += xi * xi * yi;
        s1y += xi * yi;
    }
    let det = s44 * s22 - s33 * s33;
    if det.abs() <= f64::EPSILON * s44 * s22 {
        return None;
    }
    let a = (s2y * s22 - s1y * s33) / det;
    let b = (s44 * s1y - s33 * s2y) / det;
    let my = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let ss_res: f64 = x.iter().zip(y).map(|(&xi, &yi)| (yi - a * xi * xi - b * xi).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Some((a, b, r2))
}
