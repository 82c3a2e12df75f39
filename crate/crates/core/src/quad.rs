//! Quadrature toolkit for the Fourier integrals of this model.
//!
//! Three regimes appear over and over:
//!
//! * smooth decaying integrands (adaptive Simpson / fixed Gauss-Legendre);
//! * an integrable power singularity at the origin (dyadic shells with a
//!   geometric remainder extrapolation);
//! * oscillatory factors `cos(rp)` / `sin(rp)` with a slowly varying
//!   envelope (Filon panels sized by the envelope, not the wavelength).

/// Gauss-Legendre nodes and weights on `[-1, 1]`, computed by Newton
/// iteration on the Legendre recurrence; accurate to machine precision.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 2);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Integrate `f` over `[a, b]` with this rule.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> f64 {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let mut s = 0.0;
        for (&x, &w) in self.nodes.iter().zip(self.weights.iter()) {
            s += w * f(c + h * x);
        }
        s * h
    }
}

/// Legendre polynomial `P_n(x)` and its derivative.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Adaptive Simpson with absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, 40)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let err = left + right - whole;
    if depth == 0 || err.abs() <= 15.0 * tol {
        return left + right + err / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Integrate over `[a, b]` in chunks no wider than `max_step`, one
/// Gauss-Legendre rule per chunk, summed left to right. The workhorse for
/// Bessel-oscillatory radial integrals where the chunk width is tied to the
/// local half-period.
pub fn chunked<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, max_step: f64, gl: &GaussLegendre) -> f64 {
    assert!(b >= a);
    assert!(max_step > 0.0);
    let n = (((b - a) / max_step).ceil() as usize).max(1);
    let h = (b - a) / n as f64;
    let mut total = 0.0;
    for k in 0..n {
        let lo = a + k as f64 * h;
        total += gl.integrate(f, lo, lo + h);
    }
    total
}

/// Filon moments for a quadratic fit on `[-1, 1]` against `cos(theta*u)` and
/// `u*sin(theta*u)`; series branch below `theta = 0.05` keeps full accuracy.
fn filon_moments(theta: f64) -> (f64, f64, f64) {
    if theta.abs() < 0.05 {
        let t2 = theta * theta;
        let m0c = 2.0 * (1.0 - t2 / 6.0 + t2 * t2 / 120.0);
        let m2c = 2.0 / 3.0 - t2 / 5.0 + t2 * t2 / 84.0;
        let m1s = 2.0 * theta / 3.0 - theta * t2 / 15.0 + theta * t2 * t2 / 420.0;
        (m0c, m2c, m1s)
    } else {
        let s = theta.sin();
        let c = theta.cos();
        let m0c = 2.0 * s / theta;
        let m2c = 2.0 * ((theta * theta - 2.0) * s + 2.0 * theta * c) / (theta * theta * theta);
        let m1s = 2.0 * (s - theta * c) / (theta * theta);
        (m0c, m2c, m1s)
    }
}

/// `∫_a^b g(x) cos(omega x) dx` (or `sin` with `use_sin`) on a single panel,
/// with `g` replaced by its quadratic interpolant through the endpoints and
/// midpoint. Exact in the oscillation for any `omega`.
fn filon_panel<F: Fn(f64) -> f64>(g: &F, a: f64, b: f64, omega: f64, use_sin: bool) -> f64 {
    let x1 = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let g0 = g(a);
    let g1 = g(x1);
    let g2 = g(b);
    let c0 = g1;
    let c1 = 0.5 * (g2 - g0);
    let c2 = 0.5 * (g2 + g0) - g1;
    let theta = omega * h;
    let (m0c, m2c, m1s) = filon_moments(theta);
    let even = c0 * m0c + c2 * m2c;
    let odd = c1 * m1s;
    let (sw, cw) = (omega * x1).sin_cos();
    if use_sin {
        h * (sw * even + cw * odd)
    } else {
        h * (cw * even - sw * odd)
    }
}

/// `∫_a^b g(x) cos(omega x) dx` over logarithmically spaced Filon panels.
/// Panel count follows the envelope scale only, so arbitrarily high `omega`
/// costs the same. `ratio` is the geometric panel growth (e.g. 1.02).
pub fn filon_log<F: Fn(f64) -> f64>(
    g: &F,
    a: f64,
    b: f64,
    omega: f64,
    ratio: f64,
    use_sin: bool,
) -> f64 {
    assert!(a > 0.0 && b > a && ratio > 1.0);
    let mut lo = a;
    let mut total = 0.0;
    while lo < b {
        let hi = (lo * ratio).min(b);
        total += filon_panel(g, lo, hi, omega, use_sin);
        lo = hi;
    }
    total
}

/// Dyadic-shell integral of a function with an integrable power singularity
/// at the origin: `∫_0^upper f`, shells `[upper 2^{-k-1}, upper 2^{-k}]`.
///
/// Returns the partial sums from the outside in (`series[k]` covers
/// `|x| > upper * 2^{-k-1}`) plus a geometric extrapolation of the stub
/// below the deepest shell. The caller decides convergence from `series`.
pub struct ShellIntegral {
    /// Cutoff/partial-integral pairs `(epsilon_k, ∫_{epsilon_k}^{upper} f)`.
    pub series: Vec<(f64, f64)>,
    /// Geometric extrapolation of `∫_0^{epsilon_last} f` (may be infinite
    /// or meaningless when the shell increments do not contract).
    pub stub: f64,
    /// Measured contraction ratio of successive shell increments.
    pub ratio: f64,
}

pub fn shell_integral<F: Fn(f64) -> f64>(
    f: &F,
    upper: f64,
    depth: usize,
    gl: &GaussLegendre,
    max_step: f64,
) -> ShellIntegral {
    let mut series = Vec::with_capacity(depth);
    let mut acc = 0.0;
    let mut increments = Vec::with_capacity(depth);
    for k in 0..depth {
        let hi = upper * 0.5f64.powi(k as i32);
        let lo = 0.5 * hi;
        let inc = chunked(f, lo, hi, max_step.min((hi - lo) / 4.0), gl);
        acc += inc;
        increments.push(inc);
        series.push((lo, acc));
    }
    // contraction ratio from the last few shells
    let tail = &increments[depth.saturating_sub(4)..];
    let mut ratio = 0.5;
    if tail.len() >= 2 {
        let mut rs = Vec::new();
        for w in tail.windows(2) {
            if w[0].abs() > 0.0 {
                rs.push(w[1] / w[0]);
            }
        }
        if !rs.is_empty() {
            ratio = rs.iter().sum::<f64>() / rs.len() as f64;
        }
    }
    let last = *increments.last().unwrap_or(&0.0);
    let stub = if ratio.abs() < 1.0 {
        last * ratio / (1.0 - ratio)
    } else {
        f64::INFINITY
    };
    ShellIntegral {
        series,
        stub,
        ratio,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn gl16_is_machine_precise_on_smooth() {
        let gl = GaussLegendre::new(16);
        let v = gl.integrate(|x| x.exp(), 0.0, 1.0);
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn adaptive_simpson_handles_peaked() {
        let f = |x: f64| (-(x * x) / 2.0).exp();
        let v = adaptive_simpson(&f, -40.0, 40.0, 1e-12);
        assert!((v - (2.0 * PI).sqrt()).abs() < 1e-9, "got {v}");
    }

    #[test]
    fn filon_matches_analytic_cos_integral() {
        // ∫_1^50 e^{-x} cos(40 x) dx has closed form
        let omega = 40.0;
        let g = |_x: f64| 1.0;
        // with envelope 1 the integral of cos over [a,b] is exact
        let got = filon_log(&g, 1.0, 50.0, omega, 1.05, false);
        let exact = (50.0f64 * omega).sin() / omega - (1.0f64 * omega).sin() / omega;
        assert!((got - exact).abs() < 1e-10, "got {got} want {exact}");

        let g2 = |x: f64| (-x).exp();
        let got2 = filon_log(&g2, 1.0, 60.0, omega, 1.01, false);
        // ∫ e^{-x} cos(wx) dx = e^{-x}(w sin(wx) - cos(wx))/(1+w^2)
        let anti = |x: f64| {
            (-x).exp() * (omega * (omega * x).sin() - (omega * x).cos()) / (1.0 + omega * omega)
        };
        let exact2 = anti(60.0) - anti(1.0);
        assert!((got2 - exact2).abs() < 1e-9, "got {got2} want {exact2}");
    }

    #[test]
    fn filon_sin_variant() {
        let omega = 25.0;
        let g2 = |x: f64| (-x).exp();
        let got = filon_log(&g2, 0.5, 40.0, omega, 1.01, true);
        let anti = |x: f64| {
            -(-x).exp() * ((omega * x).sin() + omega * (omega * x).cos()) / (1.0 + omega * omega)
        };
        let exact = anti(40.0) - anti(0.5);
        assert!((got - exact).abs() < 1e-9, "got {got} want {exact}");
    }

    #[test]
    fn shells_integrate_power_singularity() {
        // ∫_0^1 x^{-1/2} dx = 2, increments contract by 2^{-1/2}
        let gl = GaussLegendre::new(16);
        let out = shell_integral(&|x: f64| x.powf(-0.5), 1.0, 40, &gl, 1.0);
        let total = out.series.last().unwrap().1 + out.stub;
        assert!((total - 2.0).abs() < 1e-9, "got {total}");
        assert!((out.ratio - 0.5f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn shells_flag_divergence() {
        // ∫_0^1 x^{-3/2} dx diverges: increments grow by 2^{1/2}
        let gl = GaussLegendre::new(16);
        let out = shell_integral(&|x: f64| x.powf(-1.5), 1.0, 40, &gl, 1.0);
        assert!(out.ratio > 1.05);
        assert!(out.stub.is_infinite());
    }
}
