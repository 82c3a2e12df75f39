//! Numerics for the isotropic symmetric alpha-stable family with
//! characteristic function `exp(-|p|^alpha)` (unit scale; callers rescale).
//!
//! The density has no elementary closed form except at `alpha = 1` (Cauchy)
//! and `alpha = 2` (a Gaussian with variance 2 per axis). Everywhere else it
//! is evaluated by numerical Fourier inversion near the core and by the
//! power-tail series at large argument. The tail series is convergent for
//! `alpha < 1` and asymptotic for `alpha >= 1`; in the asymptotic case the
//! sum is truncated at its smallest term.

use crate::quad::{chunked, filon_log, GaussLegendre};
use std::f64::consts::PI;

/// Radius (in reduced units) beyond which the tail series takes over.
pub const TAIL_SWITCH: f64 = 8.0;

/// `p` beyond which `exp(-p^alpha) < eps`.
pub fn hat_cutoff(alpha: f64, eps: f64) -> f64 {
    (1.0 / eps).ln().powf(1.0 / alpha)
}

/// One tail-series term: returns `(coefficient, power)` meaning
/// `coefficient * z^{-power}` with `power = k*alpha + d`.
pub(crate) fn series_term(alpha: f64, dim: usize, k: usize) -> (f64, f64) {
    tail_term(alpha, dim, k)
}

fn tail_term(alpha: f64, dim: usize, k: usize) -> (f64, f64) {
    let kf = k as f64;
    let s = (kf * PI * alpha / 2.0).sin();
    // treat float residue at sine nodes (k alpha even) as an exact zero
    if s.abs() < 1e-12 {
        return (0.0, kf * alpha + dim as f64);
    }
    let sign = if k % 2 == 1 { 1.0 } else { -1.0 } * s.signum();
    let ln_mag = match dim {
        1 => libm::lgamma(kf * alpha + 1.0) - libm::lgamma(kf + 1.0) + s.abs().ln() - PI.ln(),
        2 => {
            kf * alpha * 2f64.ln() + 2.0 * libm::lgamma(kf * alpha / 2.0 + 1.0)
                - libm::lgamma(kf + 1.0)
                + s.abs().ln()
                - 2.0 * PI.ln()
        }
        _ => unreachable!("dimension is 1 or 2"),
    };
    (sign * ln_mag.exp(), kf * alpha + dim as f64)
}

/// Tail series for the reduced density at distance `z > 0`.
///
/// Convergent for `alpha < 1`; asymptotic otherwise (truncated at the
/// smallest term). Returns a non-negative value clamped at zero — the true
/// density is positive; tiny negative truncation leftovers are noise.
pub fn tail_density(alpha: f64, dim: usize, z: f64) -> f64 {
    let mut sum = 0.0;
    let mut prev_mag = f64::INFINITY;
    for k in 1..=400 {
        let (c, pw) = tail_term(alpha, dim, k);
        if c == 0.0 {
            continue; // sine node, not convergence
        }
        let term = c * z.powf(-pw);
        let mag = term.abs();
        if alpha >= 1.0 && mag > prev_mag {
            break; // asymptotic regime: stop at the smallest term
        }
        sum += term;
        if mag < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
        prev_mag = mag;
    }
    sum.max(0.0)
}

/// `∫_{|x| > z} a(x) dx` from the tail series (same convergence rules).
pub fn tail_mass(alpha: f64, dim: usize, z: f64) -> f64 {
    let surface = match dim {
        1 => 2.0,
        2 => 2.0 * PI,
        _ => unreachable!(),
    };
    let mut sum = 0.0;
    let mut prev_mag = f64::INFINITY;
    for k in 1..=400 {
        let (c, pw) = tail_term(alpha, dim, k);
        if c == 0.0 {
            continue;
        }
        // ∫_z^∞ r^{d-1} r^{-pw} dr = z^{d-pw} / (pw - d)
        let kf = k as f64;
        let term = surface * c * z.powf(dim as f64 - pw) / (kf * alpha);
        let mag = term.abs();
        if alpha >= 1.0 && mag > prev_mag {
            break;
        }
        sum += term;
        if mag < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
        prev_mag = mag;
    }
    sum.max(0.0)
}

/// Reduced density by Fourier inversion, `d = 1`:
/// `(1/pi) ∫_0^∞ cos(p z) exp(-p^alpha) dp`.
pub fn inversion_density_d1(alpha: f64, z: f64, gl: &GaussLegendre) -> f64 {
    let p_max = hat_cutoff(alpha, 1e-16);
    // [0, 1]: the envelope has an infinite-slope kink at 0 for alpha < 1;
    // dyadic refinement toward the origin handles it.
    let f = |p: f64| (p * z).cos() * (-p.powf(alpha)).exp();
    let mut inner = 0.0;
    let chunk = (PI / (2.0 * z.max(1.0))).min(0.25);
    let mut hi = 1.0f64;
    for _ in 0..30 {
        let lo = hi * 0.5;
        inner += chunked(&f, lo, hi, chunk, gl);
        hi = lo;
    }
    inner += hi * f(hi * 0.5); // stub below the deepest shell
    let outer = filon_log(
        &|p: f64| (-p.powf(alpha)).exp(),
        1.0,
        p_max.max(2.0),
        z,
        1.01,
        false,
    );
    (inner + outer) / PI
}

/// Reduced density by Fourier inversion, `d = 2`:
/// `(1/2pi) ∫_0^∞ J0(p z) exp(-p^alpha) p dp`.
pub fn inversion_density_d2(alpha: f64, z: f64, gl: &GaussLegendre) -> f64 {
    // envelope p*exp(-p^alpha): pick the cutoff so the tail is < 1e-15
    let mut p_max = hat_cutoff(alpha, 1e-16);
    for _ in 0..4 {
        p_max = ((1e16f64.ln()) + 2.0 * p_max.ln().max(0.0)).powf(1.0 / alpha);
    }
    let f = |p: f64| libm::j0(p * z) * (-p.powf(alpha)).exp() * p;
    let chunk = (PI / (2.0 * z.max(0.5))).min(0.5);
    let inner = kinked_inner(&f, 1.0, z, gl);
    (inner + chunked(&f, 1.0, p_max, chunk, gl)) / (2.0 * PI)
}

/// Integrate a bounded integrand whose envelope has the `p^alpha` kink at
/// the origin: dyadic shells toward zero, oscillation-aware chunks within.
fn kinked_inner<F: Fn(f64) -> f64>(f: &F, upper: f64, freq: f64, gl: &GaussLegendre) -> f64 {
    let chunk = (PI / (2.0 * freq.max(1.0))).min(0.25);
    let mut total = 0.0;
    let mut hi = upper;
    for _ in 0..40 {
        let lo = 0.5 * hi;
        total += chunked(f, lo, hi, chunk, gl);
        hi = lo;
    }
    total + hi * f(0.5 * hi)
}

/// Mass of the reduced law within `|x| <= z`, via the transform identity
/// (d=1): `(2/pi) ∫_0^∞ exp(-p^alpha) sin(p z) / p dp`.
pub fn mass_within_d1(alpha: f64, z: f64, gl: &GaussLegendre) -> f64 {
    let p_max = hat_cutoff(alpha, 1e-16).max(2.0);
    let f = |p: f64| (-p.powf(alpha)).exp() * (p * z).sin() / p;
    let inner = kinked_inner(&f, 1.0, z, gl);
    let outer = filon_log(
        &|p: f64| (-p.powf(alpha)).exp() / p,
        1.0,
        p_max,
        z,
        1.005,
        true,
    );
    (inner + outer) * 2.0 / PI
}

/// Mass of the reduced law within `|x| <= z`, via the transform identity
/// (d=2): `z ∫_0^∞ exp(-p^alpha) J1(p z) dp`.
pub fn mass_within_d2(alpha: f64, z: f64, gl: &GaussLegendre) -> f64 {
    let p_max = hat_cutoff(alpha, 1e-16).max(2.0);
    let f = |p: f64| (-p.powf(alpha)).exp() * libm::j1(p * z);
    let inner = kinked_inner(&f, 1.0, z, gl);
    z * (inner + chunked(&f, 1.0, p_max, (PI / (2.0 * z)).min(0.25), gl))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gl() -> GaussLegendre {
        GaussLegendre::new(16)
    }

    #[test]
    fn tail_series_reproduces_cauchy_d1() {
        // alpha = 1 makes the series sum exactly to 1/(pi (1+z^2))
        for z in [3.0, 10.0, 40.0] {
            let got = tail_density(1.0, 1, z);
            let want = 1.0 / (PI * (1.0 + z * z));
            assert!((got - want).abs() < 1e-12 * want, "z={z}: {got} vs {want}");
        }
    }

    #[test]
    fn tail_series_leading_term_cauchy_d2() {
        let z = 50.0;
        let got = tail_density(1.0, 2, z);
        let want = 1.0 / (2.0 * PI) * (1.0 + z * z).powf(-1.5);
        assert!((got - want).abs() < 1e-6 * want, "{got} vs {want}");
    }

    #[test]
    fn inversion_matches_cauchy_closed_form_d1() {
        for z in [0.0, 0.7, 3.0] {
            let got = inversion_density_d1(1.0, z, &gl());
            let want = 1.0 / (PI * (1.0 + z * z));
            assert!((got - want).abs() < 1e-9, "z={z}: {got} vs {want}");
        }
    }

    #[test]
    fn inversion_matches_gaussian_closed_form_d1() {
        // alpha = 2 inverts to exp(-z^2/4)/sqrt(4 pi)
        for z in [0.0, 1.3, 4.0] {
            let got = inversion_density_d1(2.0, z, &gl());
            let want = (-z * z / 4.0).exp() / (4.0 * PI).sqrt();
            assert!((got - want).abs() < 1e-9, "z={z}: {got} vs {want}");
        }
    }

    #[test]
    fn inversion_matches_cauchy_closed_form_d2() {
        for z in [0.0, 1.0, 5.0] {
            let got = inversion_density_d2(1.0, z, &gl());
            let want = 1.0 / (2.0 * PI) * (1.0 + z * z).powf(-1.5);
            assert!((got - want).abs() < 1e-8, "z={z}: {got} vs {want}");
        }
    }

    #[test]
    fn series_and_inversion_agree_in_overlap() {
        // alpha = 0.5: convergent series; check against quadrature at z
        // around the switch radius.
        for &z in &[6.0, 8.0, 12.0] {
            let q = inversion_density_d1(0.5, z, &gl());
            let s = tail_density(0.5, 1, z);
            assert!((q - s).abs() < 1e-9, "z={z}: {q} vs {s}");
        }
        for &z in &[6.0, 10.0] {
            let q = inversion_density_d2(0.5, z, &gl());
            let s = tail_density(0.5, 2, z);
            assert!((q - s).abs() < 2e-8, "z={z}: {q} vs {s}");
        }
    }

    #[test]
    fn mass_within_matches_cauchy_cdf() {
        let got = mass_within_d1(1.0, 5.0, &gl());
        let want = 2.0 / PI * 5.0f64.atan();
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }

    #[test]
    fn mass_within_plus_tail_is_one() {
        for &(alpha, dim) in &[(0.3, 1usize), (0.5, 1), (0.8, 1), (0.5, 2), (1.5, 2)] {
            let z = 30.0;
            let within = match dim {
                1 => mass_within_d1(alpha, z, &gl()),
                _ => mass_within_d2(alpha, z, &gl()),
            };
            let tail = tail_mass(alpha, dim, z);
            let total = within + tail;
            let tol = if dim == 1 { 1e-8 } else { 1e-6 };
            assert!(
                (total - 1.0).abs() < tol,
                "alpha={alpha} d={dim}: total {total}"
            );
        }
    }
}
