//! Closed-form Fourier evaluation of the pair-correlation structure.
//!
//! Everything here reduces to radial integrals of the symbol
//! `G(p) = (hat a(p) + hat a(-p)) * F(lambda(p))` with
//! `lambda(p) = 2 - hat a(p) - hat a(-p)`, where `F = 1/lambda` for the
//! stationary field and `F = (1 - exp(-lambda t)) / lambda` at finite time.
//! The stationary case has an integrable singularity `~ |p|^{-alpha}` at the
//! origin when the kernel tail is heavy; dyadic shells with a geometric
//! remainder handle it. Oscillation in the radius is handled by Filon
//! panels (d = 1) and half-period chunking of the Bessel factor (d = 2).
//!
//! Each field can be evaluated on the whole space or on a torus of side
//! `L`, where the integral becomes a lattice-mode sum. The torus form is
//! what a periodic simulation actually realizes; note that at finite time
//! it contains the zero-mode term `2 rho t / L^d` (a global population
//! fluctuation absent on the whole space), while the stationary torus field
//! has the zero mode projected out, there being no stationary value for it
//! on a finite volume.

use crate::fit::log_log_slope;
use crate::kernel::{DispersalKernel, JumpKernel, KernelError};
use crate::quad::{chunked, filon_log, shell_integral, GaussLegendre};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("stationary pair correlation does not exist: the spectral integral diverges (small-p exponent {exponent:.3}); see the integrability report")]
    DivergentKernel { exponent: f64 },
    #[error("time must be non-negative and finite, got {0}")]
    BadTime(f64),
    #[error("radii must be non-negative and sorted")]
    BadRadii,
}

/// Where a field lives: the whole space or a periodic torus of given side.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Domain {
    Line,
    Torus { length: f64 },
}

/// Radial pair-correlation field `k2(r)`; `time == None` means stationary.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralField {
    pub dimension: usize,
    pub radii: Vec<f64>,
    /// `k2` values; subtract `rho^2` for the structural part.
    pub values: Vec<f64>,
    pub rho: f64,
    pub time: Option<f64>,
    pub domain: Domain,
}

impl SpectralField {
    /// Structural part `u(r) = k2(r) - rho^2`.
    pub fn u_values(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|v| v - self.rho * self.rho)
            .collect()
    }

    /// Linear interpolation of `k2` in the radius (clamped at the ends).
    pub fn interpolate(&self, r: f64) -> f64 {
        let rs = &self.radii;
        let vs = &self.values;
        if r <= rs[0] {
            return vs[0];
        }
        if r >= *rs.last().unwrap() {
            return *vs.last().unwrap();
        }
        let i = rs.partition_point(|&x| x < r).max(1);
        let (r0, r1) = (rs[i - 1], rs[i]);
        let w = (r - r0) / (r1 - r0);
        vs[i - 1] * (1.0 - w) + vs[i] * w
    }
}

/// Outcome of the spectral integrability diagnostic: decides whether the
/// stationary pair structure exists for this kernel (and optional jumps).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IntegrabilityReport {
    pub finite: bool,
    /// Value of the integral when finite.
    pub value: Option<f64>,
    /// `(epsilon, integral over |p| > epsilon)`, epsilon decreasing.
    pub cutoff_series: Vec<(f64, f64)>,
    /// Fitted log-log exponent of the integrand near `p = 0`.
    pub small_p_exponent: f64,
    /// Contraction ratio of successive dyadic-shell increments.
    pub shell_ratio: f64,
}

/// Ratio threshold of the cutoff series over its last three decades; growth
/// beyond this classifies the integral as divergent.
const CAUCHY_RATIO: f64 = 1.05;
const SHELL_DEPTH: usize = 50;

/// `lambda(p) = 2 - hat a(p) - hat a(-p)` plus the jump augmentation
/// `hat J(0) - hat J(p)` when jumps are present, computed through
/// `1 - hat a` to keep precision at tiny `p`.
fn denominator(kernel: &DispersalKernel, jump: Option<&JumpKernel>, p: f64) -> f64 {
    let mut d = 2.0 * one_minus_hat(kernel, p);
    if let Some(j) = jump {
        d += j.rate * one_minus_hat(&j.shape, p);
    }
    d
}

/// `1 - hat a(|p|)` without cancellation for `|p|` near zero.
fn one_minus_hat(kernel: &DispersalKernel, p: f64) -> f64 {
    use crate::kernel::KernelFamily::*;
    let q = p.abs() * kernel.scale();
    match kernel.family() {
        SymmetricStable => -(-q.powf(kernel.alpha())).exp_m1(),
        Cauchy => -(-q).exp_m1(),
        Gaussian => -(-q * q / 2.0).exp_m1(),
        CompactUniform => {
            if q < 1e-3 {
                match kernel.dimension() {
                    1 => q * q / 6.0 * (1.0 - q * q / 20.0),
                    _ => q * q / 8.0 * (1.0 - q * q / 24.0),
                }
            } else {
                1.0 - kernel.fourier_hat_radial(p)
            }
        }
    }
}

/// `(1 - exp(-lambda t)) / lambda`, with the `lambda -> 0` limit `t`.
fn time_factor(lambda: f64, t: f64) -> f64 {
    let x = lambda * t;
    if x < 1e-9 {
        t * (1.0 - 0.5 * x)
    } else {
        -(-x).exp_m1() / lambda
    }
}

/// Relaxation rate of the pair sector at frequency `p`: both particles of
/// a pair disperse (`2(1 - hat a)`) and, when relocation is on, both jump
/// (`2 m (1 - hat J / m)`). This is the symbol that the simulated dynamics
/// actually relaxes with; it differs from the single-`J` augmentation used
/// by the integrability diagnostic only in the constant in front of the
/// jump term, which never affects the finite/divergent classification.
fn pair_sector_rate(kernel: &DispersalKernel, jump: Option<&JumpKernel>, p: f64) -> f64 {
    let mut lam = 2.0 * one_minus_hat(kernel, p);
    if let Some(j) = jump {
        lam += 2.0 * j.rate * one_minus_hat(&j.shape, p);
    }
    lam
}

/// Cutoff-series diagnostic for `∫ |hat a| / (2 - hat a(p) - hat a(-p)
/// [+ hat J(0) - hat J(p)]) dp` over the whole space.
pub fn integrability_diagnostic(
    kernel: &DispersalKernel,
    jump: Option<&JumpKernel>,
) -> IntegrabilityReport {
    let gl = GaussLegendre::new(16);
    let dim = kernel.dimension();
    // measure factor turning the radial profile into the full-space integral
    let f = |p: f64| {
        let raw = kernel.fourier_hat_radial(p).abs() / denominator(kernel, jump, p);
        match dim {
            1 => 2.0 * raw,
            _ => 2.0 * PI * p * raw,
        }
    };
    let p_max = kernel.fourier_cutoff(1e-12).max(2.0);
    let outer = chunked(&f, 1.0, p_max, 0.5, &gl);
    let shells = shell_integral(&f, 1.0, SHELL_DEPTH, &gl, 0.25);
    let cutoff_series: Vec<(f64, f64)> = shells
        .series
        .iter()
        .map(|&(eps, partial)| (eps, outer + partial))
        .collect();

    // Cauchy test across the last three decades of epsilon (ten shells)
    let last = cutoff_series.len() - 1;
    let anchor = last.saturating_sub(10);
    let grew = cutoff_series[last].1 / cutoff_series[anchor].1.max(1e-300);
    let finite = grew < CAUCHY_RATIO && shells.stub.is_finite();

    // integrand exponent near p = 0 (without the d=2 area factor)
    let mut ps = Vec::new();
    let mut vs = Vec::new();
    for i in 0..8 {
        let p = 2f64.powi(-30 + 10 * i / 7);
        ps.push(p);
        vs.push(kernel.fourier_hat_radial(p).abs() / denominator(kernel, jump, p));
    }
    let small_p_exponent = log_log_slope(&ps, &vs).map(|(m, _)| m).unwrap_or(f64::NAN);

    IntegrabilityReport {
        finite,
        value: finite.then(|| cutoff_series[last].1 + shells.stub),
        cutoff_series,
        small_p_exponent,
        shell_ratio: shells.ratio,
    }
}

/// Quadrature knobs for the whole-space inverse transform; `refined`
/// doubles every resolution control, which must move no reported value by
/// more than one part in ten thousand.
#[derive(Clone, Copy, Debug)]
pub struct Resolution {
    pub filon_ratio: f64,
    pub max_chunk: f64,
    pub shell_depth: usize,
}

impl Default for Resolution {
    fn default() -> Self {
        Self {
            filon_ratio: 1.02,
            max_chunk: 0.25,
            shell_depth: 44,
        }
    }
}

impl Resolution {
    pub fn refined(self) -> Self {
        Self {
            filon_ratio: 1.0 + 0.5 * (self.filon_ratio - 1.0),
            max_chunk: 0.5 * self.max_chunk,
            shell_depth: self.shell_depth + 4,
        }
    }
}

/// Evaluate `(1/(2 pi)^d) ∫ e^{i p x} G(|p|) dp` at `|x| = r` on the whole
/// space, for an even radial symbol `G` with an integrable singularity at
/// worst `|p|^{-alpha}` at the origin.
fn inverse_transform_line<G: Fn(f64) -> f64 + Sync>(
    dim: usize,
    g: &G,
    r: f64,
    p_max: f64,
    gl: &GaussLegendre,
    res: Resolution,
) -> f64 {
    let r_eff = r.max(1.0);
    let chunk = (PI / (2.0 * r_eff)).min(res.max_chunk);
    match dim {
        1 => {
            let f = |p: f64| g(p) * (p * r).cos();
            let shells = shell_integral(&f, 1.0, res.shell_depth, gl, chunk);
            let inner = shells.series.last().unwrap().1 + shells.stub;
            let outer = filon_log(g, 1.0, p_max.max(2.0), r, res.filon_ratio, false);
            (inner + outer) / PI
        }
        _ => {
            let f = |p: f64| g(p) * libm::j0(p * r) * p;
            let shells = shell_integral(&f, 1.0, res.shell_depth, gl, chunk);
            let inner = shells.series.last().unwrap().1 + shells.stub;
            let outer = chunked(&f, 1.0, p_max.max(2.0), 2.0 * chunk, gl);
            (inner + outer) / (2.0 * PI)
        }
    }
}

/// The same inverse transform restricted to the torus lattice modes
/// `p_m = 2 pi m / L`: `(1/L^d) sum_m G(|p_m|) cos(p_m . x)`.
/// `zero_mode` supplies the `m = 0` coefficient (time-dependent fields) or
/// `None` to project it out (stationary fields). `mode_cap` optionally
/// truncates at a fixed mode index (used to compare against band-limited
/// lattice computations).
fn inverse_transform_torus<G: Fn(f64) -> f64 + Sync>(
    dim: usize,
    g: &G,
    r: f64,
    length: f64,
    p_max: f64,
    zero_mode: Option<f64>,
    mode_cap: Option<usize>,
) -> f64 {
    let base = 2.0 * PI / length;
    let mut m_max = (p_max / base).ceil() as usize;
    if let Some(cap) = mode_cap {
        m_max = m_max.min(cap);
    }
    match dim {
        1 => {
            let mut s = zero_mode.unwrap_or(0.0);
            for m in 1..=m_max {
                let p = base * m as f64;
                s += 2.0 * g(p) * (p * r).cos();
            }
            s / length
        }
        _ => {
            let mm = m_max as i64;
            let mut s = zero_mode.unwrap_or(0.0);
            for m1 in -mm..=mm {
                let c = (base * m1 as f64 * r).cos();
                for m2 in -mm..=mm {
                    if m1 == 0 && m2 == 0 {
                        continue;
                    }
                    let p = base * ((m1 * m1 + m2 * m2) as f64).sqrt();
                    if p <= p_max {
                        s += g(p) * c;
                    }
                }
            }
            s / (length * length)
        }
    }
}

fn check_radii(radii: &[f64]) -> Result<(), SpectralError> {
    if radii.is_empty() || radii.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(SpectralError::BadRadii);
    }
    if radii.windows(2).any(|w| w[1] < w[0]) {
        return Err(SpectralError::BadRadii);
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn field_from_symbol<G: Fn(f64) -> f64 + Sync>(
    kernel: &DispersalKernel,
    rho: f64,
    radii: &[f64],
    domain: Domain,
    g: &G,
    zero_mode: Option<f64>,
    mode_cap: Option<usize>,
    time: Option<f64>,
    res: Resolution,
) -> SpectralField {
    let gl = GaussLegendre::new(16);
    let dim = kernel.dimension();
    let p_max = kernel.fourier_cutoff(1e-12).max(2.0);
    let values: Vec<f64> = radii
        .par_iter()
        .map(|&r| {
            let u = match domain {
                Domain::Line => inverse_transform_line(dim, g, r, p_max, &gl, res),
                Domain::Torus { length } => {
                    inverse_transform_torus(dim, g, r, length, p_max, zero_mode, mode_cap)
                }
            };
            rho * rho + rho * u
        })
        .collect();
    SpectralField {
        dimension: dim,
        radii: radii.to_vec(),
        values,
        rho,
        time,
        domain,
    }
}

/// Stationary pair correlation
/// `k2(r) = rho^2 + (rho/(2 pi)^d) ∫ e^{ipx} (hat a(p) + hat a(-p)) /
/// (2 - hat a(p) - hat a(-p)) dp`.
///
/// Refuses kernels whose spectral integral diverges (no stationary pair
/// structure exists); `rho = 0` short-circuits to the zero field.
pub fn stationary_pair_correlation(
    kernel: &DispersalKernel,
    rho: f64,
    radii: &[f64],
    domain: Domain,
) -> Result<SpectralField, SpectralError> {
    stationary_pair_correlation_capped(kernel, rho, radii, domain, None)
}

/// Same as [`stationary_pair_correlation`] with an optional torus mode cap,
/// for comparisons against band-limited lattice solutions.
pub fn stationary_pair_correlation_capped(
    kernel: &DispersalKernel,
    rho: f64,
    radii: &[f64],
    domain: Domain,
    mode_cap: Option<usize>,
) -> Result<SpectralField, SpectralError> {
    stationary_pair_correlation_with_jumps(kernel, None, rho, radii, domain, mode_cap)
}

/// Stationary pair correlation of the dynamics with relocation: the pair
/// sector relaxes at [`pair_sector_rate`], while the birth source is
/// unchanged. Heavy-tailed jumps restore a stationary structure under a
/// light-tailed dispersal kernel.
pub fn stationary_pair_correlation_with_jumps(
    kernel: &DispersalKernel,
    jump: Option<&JumpKernel>,
    rho: f64,
    radii: &[f64],
    domain: Domain,
    mode_cap: Option<usize>,
) -> Result<SpectralField, SpectralError> {
    check_radii(radii)?;
    if rho == 0.0 {
        return Ok(SpectralField {
            dimension: kernel.dimension(),
            radii: radii.to_vec(),
            values: vec![0.0; radii.len()],
            rho,
            time: None,
            domain,
        });
    }
    let report = integrability_diagnostic(kernel, jump);
    if !report.finite {
        return Err(SpectralError::DivergentKernel {
            exponent: report.small_p_exponent,
        });
    }
    let g = |p: f64| {
        let sym = 2.0 * kernel.fourier_hat_radial(p);
        sym / pair_sector_rate(kernel, jump, p)
    };
    Ok(field_from_symbol(
        kernel,
        rho,
        radii,
        domain,
        &g,
        None,
        mode_cap,
        None,
        Resolution::default(),
    ))
}

/// Pair correlation at time `t` from Poisson initial data `k2 = rho^2`:
/// the symbol gains the closed-form factor `(1 - e^{-lambda t}) / lambda`,
/// with the limit `t` at the zero mode.
pub fn pair_correlation_at_time(
    kernel: &DispersalKernel,
    rho: f64,
    t: f64,
    radii: &[f64],
    domain: Domain,
) -> Result<SpectralField, SpectralError> {
    pair_correlation_at_time_capped(kernel, rho, t, radii, domain, None)
}

/// Same as [`pair_correlation_at_time`] with an optional torus mode cap,
/// for comparisons against band-limited lattice solutions.
pub fn pair_correlation_at_time_capped(
    kernel: &DispersalKernel,
    rho: f64,
    t: f64,
    radii: &[f64],
    domain: Domain,
    mode_cap: Option<usize>,
) -> Result<SpectralField, SpectralError> {
    pair_correlation_at_time_with_jumps(kernel, None, rho, t, radii, domain, mode_cap)
}

/// Time-dependent pair correlation of the dynamics with relocation; see
/// [`pair_sector_rate`]. Jumps conserve the intensity, so the torus zero
/// mode keeps its drift `2 rho t / L^d`.
pub fn pair_correlation_at_time_with_jumps(
    kernel: &DispersalKernel,
    jump: Option<&JumpKernel>,
    rho: f64,
    t: f64,
    radii: &[f64],
    domain: Domain,
    mode_cap: Option<usize>,
) -> Result<SpectralField, SpectralError> {
    check_radii(radii)?;
    if !(t.is_finite() && t >= 0.0) {
        return Err(SpectralError::BadTime(t));
    }
    if rho == 0.0 || t == 0.0 {
        let k0 = rho * rho;
        return Ok(SpectralField {
            dimension: kernel.dimension(),
            radii: radii.to_vec(),
            values: vec![k0; radii.len()],
            rho,
            time: Some(t),
            domain,
        });
    }
    let g = |p: f64| {
        let sym = 2.0 * kernel.fourier_hat_radial(p);
        sym * time_factor(pair_sector_rate(kernel, jump, p), t)
    };
    Ok(field_from_symbol(
        kernel,
        rho,
        radii,
        domain,
        &g,
        Some(2.0 * t),
        mode_cap,
        Some(t),
        Resolution::default(),
    ))
}

/// On-diagonal growth curve `t -> k_t(0)` and its classification.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClusteringCurve {
    pub points: Vec<(f64, f64)>,
    pub classification: ClusterClass,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClusterClass {
    /// Bounded curve, Cauchy-converging to the stationary on-diagonal value.
    Converging { stationary_estimate: f64 },
    /// Unbounded growth with the fitted log-log exponent of `k_t(0) - rho^2`.
    Diverging { growth_exponent: f64 },
}

/// Evaluate `k_t(0)` over an increasing time grid and classify the kernel
/// as relaxing (heavy tail) or clustering (light tail).
pub fn clustering_growth_curve(
    kernel: &DispersalKernel,
    rho: f64,
    t_grid: &[f64],
) -> Result<ClusteringCurve, SpectralError> {
    if t_grid.is_empty() || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SpectralError::BadRadii);
    }
    if t_grid.iter().any(|&t| !(t.is_finite() && t >= 0.0)) {
        return Err(SpectralError::BadTime(*t_grid.last().unwrap()));
    }
    let points: Vec<(f64, f64)> = t_grid
        .par_iter()
        .map(|&t| {
            let f = pair_correlation_at_time(kernel, rho, t, &[0.0], Domain::Line)
                .expect("time grid validated");
            (t, f.values[0])
        })
        .collect();
    if rho == 0.0 {
        return Ok(ClusteringCurve {
            points,
            classification: ClusterClass::Converging {
                stationary_estimate: 0.0,
            },
        });
    }
    let n = points.len();
    let cauchy_converged = n >= 2 && {
        let (t_prev, v_prev) = points[n - 2];
        let (_, v_last) = points[n - 1];
        let _ = t_prev;
        (v_last - v_prev).abs() <= 0.01 * (v_last - rho * rho).abs().max(1e-12)
    };
    let classification = if cauchy_converged {
        ClusterClass::Converging {
            stationary_estimate: points[n - 1].1,
        }
    } else {
        let ts: Vec<f64> = points.iter().map(|p| p.0).collect();
        let us: Vec<f64> = points.iter().map(|p| p.1 - rho * rho).collect();
        let exponent = log_log_slope(&ts, &us).map(|(m, _)| m).unwrap_or(f64::NAN);
        ClusterClass::Diverging {
            growth_exponent: exponent,
        }
    };
    Ok(ClusteringCurve {
        points,
        classification,
    })
}

/// Brute-force 2-D lattice Riemann sum of the inverse transform, used only
/// to cross-check the Bessel radial reduction. `time = None` gives the
/// stationary symbol (singular at the origin, so keep `dp` small), a finite
/// time gives the bounded time-dependent symbol.
pub fn u_brute_2d(
    kernel: &DispersalKernel,
    rho: f64,
    time: Option<f64>,
    r: f64,
    dp: f64,
    p_max: f64,
) -> f64 {
    assert_eq!(kernel.dimension(), 2);
    let n = (p_max / dp).ceil() as i64;
    let mut s = 0.0;
    for i in -n..=n {
        let px = i as f64 * dp;
        for j in -n..=n {
            let py = j as f64 * dp;
            let pn = (px * px + py * py).sqrt();
            if pn > p_max {
                continue;
            }
            let lambda = 2.0 * one_minus_hat(kernel, pn);
            let g = match time {
                None => {
                    if pn == 0.0 {
                        continue;
                    }
                    2.0 * kernel.fourier_hat_radial(pn) / lambda
                }
                Some(t) => 2.0 * kernel.fourier_hat_radial(pn) * time_factor(lambda, t),
            };
            s += g * (px * r).cos();
        }
    }
    rho * s * dp * dp / (4.0 * PI * PI)
}

/// Uniform zero-mode drift rate of the torus pair correlation in the
/// critical regime: `d/dt mean(k2_t) = 2 rho / L^d`. This is the exactly
/// known finite-volume term produced by global population fluctuations.
pub fn torus_zero_mode_rate(rho: f64, dim: usize, length: f64) -> f64 {
    2.0 * rho / length.powi(dim as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stable(alpha: f64, dim: usize) -> DispersalKernel {
        DispersalKernel::symmetric_stable(alpha, dim, 1.0).unwrap()
    }

    // zeta(s) by Euler-Maclaurin; test-side oracle helper
    fn zeta(s: f64) -> f64 {
        let n = 64;
        let mut sum = 0.0;
        for k in 1..n {
            sum += (k as f64).powf(-s);
        }
        let nf = n as f64;
        sum + nf.powf(1.0 - s) / (s - 1.0) + 0.5 * nf.powf(-s) + s * nf.powf(-s - 1.0) / 12.0
    }

    #[test]
    fn integrability_value_matches_gamma_zeta_oracle_d1() {
        // ∫_R hat a/(2-2 hat a) dp = Gamma(1+1/alpha) zeta(1/alpha) for the
        // stable family; alpha = 0.5 gives pi^2/3 exactly.
        for &alpha in &[0.3, 0.5, 0.8] {
            let rep = integrability_diagnostic(&stable(alpha, 1), None);
            assert!(rep.finite, "alpha={alpha} should be finite");
            let want = libm::tgamma(1.0 + 1.0 / alpha) * zeta(1.0 / alpha);
            let got = rep.value.unwrap();
            assert!(
                (got - want).abs() < 2e-4 * want,
                "alpha={alpha}: {got} vs {want}"
            );
        }
        let rep = integrability_diagnostic(&stable(0.5, 1), None);
        let want = PI * PI / 3.0;
        assert!((rep.value.unwrap() - want).abs() < 1e-4 * want);
    }

    #[test]
    fn integrability_value_matches_gamma_zeta_oracle_d2() {
        // (pi/alpha) Gamma(2/alpha) zeta(2/alpha) in the plane
        let rep = integrability_diagnostic(&stable(1.5, 2), None);
        assert!(rep.finite);
        let want = PI / 1.5 * libm::tgamma(2.0 / 1.5) * zeta(2.0 / 1.5);
        let got = rep.value.unwrap();
        assert!((got - want).abs() < 2e-4 * want, "{got} vs {want}");
    }

    #[test]
    fn integrability_classification() {
        assert!(integrability_diagnostic(&stable(0.5, 1), None).finite);
        assert!(!integrability_diagnostic(&stable(1.0, 1), None).finite);
        assert!(!integrability_diagnostic(&stable(1.5, 1), None).finite);
        assert!(integrability_diagnostic(&stable(1.5, 2), None).finite);
        assert!(integrability_diagnostic(&stable(0.5, 2), None).finite);
        let g1 = DispersalKernel::gaussian(1, 1.0).unwrap();
        let g2 = DispersalKernel::gaussian(2, 1.0).unwrap();
        assert!(!integrability_diagnostic(&g1, None).finite);
        assert!(!integrability_diagnostic(&g2, None).finite);
    }

    #[test]
    fn integrability_small_p_exponent() {
        for &alpha in &[0.5, 1.5] {
            let rep = integrability_diagnostic(&stable(alpha, 1), None);
            assert!(
                (rep.small_p_exponent + alpha).abs() < 0.1 * alpha,
                "alpha={alpha}: exponent {}",
                rep.small_p_exponent
            );
        }
    }

    #[test]
    fn cutoff_series_is_monotone() {
        let rep = integrability_diagnostic(&stable(0.5, 1), None);
        for w in rep.cutoff_series.windows(2) {
            assert!(w[1].1 >= w[0].1);
            assert!(w[1].0 < w[0].0);
        }
    }

    #[test]
    fn jump_kernel_flips_gaussian_to_finite() {
        let gauss = DispersalKernel::gaussian(1, 1.0).unwrap();
        assert!(!integrability_diagnostic(&gauss, None).finite);
        let shape = stable(0.5, 1);
        let jump = JumpKernel::new(shape, 1.0).unwrap();
        let rep = integrability_diagnostic(&gauss, Some(&jump));
        assert!(rep.finite, "heavy jumps should restore integrability");
    }

    #[test]
    fn stationary_on_diagonal_matches_gamma_zeta_oracle() {
        // u(0) = rho * Gamma(1+1/alpha) zeta(1/alpha) / pi in d = 1;
        // alpha = 0.5, rho = 1 gives pi/3.
        let f = stationary_pair_correlation(&stable(0.5, 1), 1.0, &[0.0], Domain::Line).unwrap();
        let want = 1.0 + PI / 3.0;
        assert!(
            (f.values[0] - want).abs() < 1e-5,
            "{} vs {want}",
            f.values[0]
        );

        let f2 = stationary_pair_correlation(&stable(1.5, 2), 1.0, &[0.0], Domain::Line).unwrap();
        let want2 = 1.0 + libm::tgamma(2.0 / 1.5) * zeta(2.0 / 1.5) / (2.0 * PI * 1.5);
        assert!(
            (f2.values[0] - want2).abs() < 1e-4 * want2,
            "{} vs {want2}",
            f2.values[0]
        );
    }

    #[test]
    fn stationary_zero_density_is_zero() {
        let f = stationary_pair_correlation(
            &DispersalKernel::gaussian(1, 1.0).unwrap(),
            0.0,
            &[0.0, 1.0],
            Domain::Line,
        )
        .unwrap();
        assert!(f.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stationary_scaling_in_rho() {
        let radii = [0.0, 1.0, 5.0, 20.0];
        let f1 = stationary_pair_correlation(&stable(0.5, 1), 1.0, &radii, Domain::Line).unwrap();
        let f2 = stationary_pair_correlation(&stable(0.5, 1), 2.0, &radii, Domain::Line).unwrap();
        for (a, b) in f1.values.iter().zip(f2.values.iter()) {
            // u is linear in rho: k(2 rho) - 4 rho^2 = 2 (k(rho) - rho^2)
            assert!((b - 4.0 - 2.0 * (a - 1.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn stationary_refuses_light_tails() {
        let err = stationary_pair_correlation(&stable(1.5, 1), 1.0, &[0.0], Domain::Line);
        assert!(matches!(err, Err(SpectralError::DivergentKernel { .. })));
    }

    #[test]
    fn stationary_decays_and_stays_above_rho_squared() {
        let radii: Vec<f64> = (0..40).map(|i| i as f64 * 2.5).collect();
        let f = stationary_pair_correlation(&stable(0.5, 1), 1.0, &radii, Domain::Line).unwrap();
        let u = f.u_values();
        assert!(u[0] > 0.0);
        assert!(u.last().unwrap().abs() < 0.1 * u[0]);
        for &v in &u {
            assert!(v > -1e-8, "positivity violated: {v}");
        }
        // magnitudes shrink toward large r
        assert!(u[30].abs() < u[5].abs());
    }

    #[test]
    fn time_zero_is_poisson() {
        let f =
            pair_correlation_at_time(&stable(0.5, 1), 1.3, 0.0, &[0.0, 3.0], Domain::Line).unwrap();
        for &v in &f.values {
            assert_eq!(v, 1.3 * 1.3);
        }
    }

    #[test]
    fn time_field_is_monotone_in_t_and_bounded_by_stationary() {
        let radii = [0.0, 1.0, 4.0, 16.0];
        let k = stable(0.5, 1);
        let stat = stationary_pair_correlation(&k, 1.0, &radii, Domain::Line).unwrap();
        let mut prev = vec![1.0; radii.len()];
        for t in [0.5, 2.0, 8.0, 32.0] {
            let f = pair_correlation_at_time(&k, 1.0, t, &radii, Domain::Line).unwrap();
            for ((v, p0), s0) in f.values.iter().zip(prev.iter()).zip(stat.values.iter()) {
                assert!(*v >= p0 - 1e-10, "not monotone at t={t}");
                assert!(*v <= s0 + 1e-6, "exceeds stationary");
            }
            prev = f.values.clone();
        }
    }

    #[test]
    fn long_time_field_agrees_with_stationary() {
        let radii = [0.0, 0.5, 2.0, 10.0, 50.0];
        let k = stable(0.5, 1);
        let stat = stationary_pair_correlation(&k, 1.0, &radii, Domain::Line).unwrap();
        let f = pair_correlation_at_time(&k, 1.0, 1e4, &radii, Domain::Line).unwrap();
        for ((v, s0), r) in f.values.iter().zip(stat.values.iter()).zip(radii.iter()) {
            let rel = (v - s0).abs() / s0;
            assert!(rel < 1e-3, "r={r}: rel {rel}");
        }
    }

    #[test]
    fn gaussian_on_diagonal_grows_like_sqrt_t() {
        let k = DispersalKernel::gaussian(1, 1.0).unwrap();
        let curve = clustering_growth_curve(&k, 1.0, &[10.0, 100.0, 1000.0]).unwrap();
        match curve.classification {
            ClusterClass::Diverging { growth_exponent } => {
                assert!(
                    (growth_exponent - 0.5).abs() < 0.1,
                    "exponent {growth_exponent}"
                );
            }
            _ => panic!("gaussian must diverge"),
        }
        let vals: Vec<f64> = curve.points.iter().map(|p| p.1).collect();
        assert!(vals[1] > vals[0] && vals[2] > vals[1]);
    }

    #[test]
    fn alpha_15_growth_exponent_is_one_third() {
        let curve = clustering_growth_curve(&stable(1.5, 1), 1.0, &[10.0, 100.0, 1000.0]).unwrap();
        match curve.classification {
            ClusterClass::Diverging { growth_exponent } => {
                let want = 1.0 - 1.0 / 1.5;
                assert!(
                    (growth_exponent - want).abs() < 0.1,
                    "exponent {growth_exponent} vs {want}"
                );
            }
            _ => panic!("alpha=1.5 in d=1 must diverge"),
        }
    }

    #[test]
    fn heavy_growth_curve_converges_to_stationary() {
        let k = stable(0.5, 1);
        let grid = [1.0, 10.0, 100.0, 1000.0];
        let curve = clustering_growth_curve(&k, 1.0, &grid).unwrap();
        match curve.classification {
            ClusterClass::Converging {
                stationary_estimate,
            } => {
                let stat = stationary_pair_correlation(&k, 1.0, &[0.0], Domain::Line)
                    .unwrap()
                    .values[0];
                assert!(
                    (stationary_estimate - stat).abs() < 0.01 * stat,
                    "{stationary_estimate} vs {stat}"
                );
            }
            _ => panic!("alpha=0.5 must converge"),
        }
    }

    #[test]
    fn radial_reduction_matches_brute_2d_sum() {
        // bounded time-dependent symbol: a coarse Riemann sum converges
        let k = stable(1.5, 2);
        let t = 3.0;
        let radii = [0.0, 1.0, 3.0];
        let f = pair_correlation_at_time(&k, 1.0, t, &radii, Domain::Line).unwrap();
        for (i, &r) in radii.iter().enumerate() {
            let brute = u_brute_2d(&k, 1.0, Some(t), r, 0.01, 12.0);
            let got = f.values[i] - 1.0;
            assert!(
                (got - brute).abs() < 5e-3 * got.abs().max(0.05),
                "r={r}: reduction {got} vs brute {brute}"
            );
        }
    }

    #[test]
    fn torus_series_approaches_line_integral_for_large_torus() {
        let k = stable(0.5, 1);
        let radii = [0.0, 2.0, 10.0];
        let line = stationary_pair_correlation(&k, 1.0, &radii, Domain::Line).unwrap();
        let torus =
            stationary_pair_correlation(&k, 1.0, &radii, Domain::Torus { length: 4000.0 }).unwrap();
        for ((lv, tv), r) in line
            .values
            .iter()
            .zip(torus.values.iter())
            .zip(radii.iter())
        {
            assert!((lv - tv).abs() < 0.02, "r={r}: line {lv} torus {tv}");
        }
    }

    #[test]
    fn torus_time_field_contains_zero_mode_drift() {
        // mean of u over the torus equals 2 rho t / L at finite t
        let k = stable(0.5, 1);
        let length = 200.0;
        let t = 5.0;
        let n = 400;
        let radii: Vec<f64> = (0..n)
            .map(|i| i as f64 * length / (2.0 * n as f64))
            .collect();
        let f = pair_correlation_at_time(&k, 1.0, t, &radii, Domain::Torus { length }).unwrap();
        let mean_u = f.u_values().iter().sum::<f64>() / n as f64;
        let drift = torus_zero_mode_rate(1.0, 1, length) * t;
        // the radial mean over [0, L/2] is the torus mean by evenness
        assert!(
            (mean_u - drift).abs() < 0.015,
            "mean u {mean_u} vs drift {drift}"
        );
    }

    #[test]
    fn divergent_cutoff_series_grows_at_the_expected_rate() {
        // alpha = 1.5 in d = 1: the integrand is |p|^{-1.5}, so dyadic
        // shell increments expand by 2^{1/2}
        let rep = integrability_diagnostic(&stable(1.5, 1), None);
        assert!(!rep.finite);
        assert!(
            (rep.shell_ratio - 2f64.sqrt()).abs() < 0.02,
            "shell ratio {}",
            rep.shell_ratio
        );
    }

    #[test]
    fn clustering_curve_is_identically_zero_without_particles() {
        let curve = clustering_growth_curve(&stable(1.5, 1), 0.0, &[1.0, 10.0]).unwrap();
        assert!(curve.points.iter().all(|p| p.1 == 0.0));
        assert!(matches!(
            curve.classification,
            ClusterClass::Converging { stationary_estimate } if stationary_estimate == 0.0
        ));
    }

    #[test]
    fn doubling_quadrature_resolution_moves_nothing() {
        // stationary symbol, both dimensions, default vs refined knobs
        let gl = GaussLegendre::new(16);
        for (alpha, dim) in [(0.5, 1usize), (1.5, 2)] {
            let k = stable(alpha, dim);
            let g = |p: f64| kernel_symbol(&k, p);
            let p_max = k.fourier_cutoff(1e-12).max(2.0);
            for r in [0.0, 1.0, 10.0, 60.0] {
                let base = inverse_transform_line(dim, &g, r, p_max, &gl, Resolution::default());
                let fine =
                    inverse_transform_line(dim, &g, r, p_max, &gl, Resolution::default().refined());
                let rel = (base - fine).abs() / fine.abs().max(1e-12);
                assert!(rel < 1e-4, "a={alpha} d={dim} r={r}: rel {rel:.2e}");
            }
        }
    }

    fn kernel_symbol(k: &DispersalKernel, p: f64) -> f64 {
        2.0 * k.fourier_hat_radial(p) / (2.0 * one_minus_hat(k, p))
    }

    #[test]
    fn interpolation_is_exact_on_nodes() {
        let f = SpectralField {
            dimension: 1,
            radii: vec![0.0, 1.0, 2.0],
            values: vec![3.0, 5.0, 4.0],
            rho: 1.0,
            time: None,
            domain: Domain::Line,
        };
        assert_eq!(f.interpolate(1.0), 5.0);
        assert_eq!(f.interpolate(0.5), 4.0);
        assert_eq!(f.interpolate(9.0), 4.0);
    }
}
