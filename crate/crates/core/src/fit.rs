//! Small least-squares helpers used by validation reports and growth-rate
//! diagnostics.

/// Ordinary least squares for `y = slope * x + intercept`.
///
/// Returns `None` when fewer than two distinct abscissae are supplied.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys.iter()) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Log-log slope fit: `ln y = slope * ln x + c`. Points with non-positive
/// `x` or `y` are skipped; `None` if fewer than two usable points remain.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let mut lx = Vec::with_capacity(xs.len());
    let mut ly = Vec::with_capacity(ys.len());
    for (&x, &y) in xs.iter().zip(ys.iter()) {
        if x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite() {
            lx.push(x.ln());
            ly.push(y.ln());
        }
    }
    linear_fit(&lx, &ly)
}

/// Mean and (unbiased) sample variance.
pub fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (mean, ss / (n as f64 - 1.0))
}

/// Standard error of the sample variance through the fourth central moment:
/// `Var(s^2) = (m4 - (n-3)/(n-1) * s^4) / n`.
pub fn variance_se(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 4 {
        return f64::INFINITY;
    }
    let nf = n as f64;
    let (mean, var) = mean_var(values);
    let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / nf;
    let v = (m4 - (nf - 3.0) / (nf - 1.0) * var * var) / nf;
    v.max(0.0).sqrt()
}
