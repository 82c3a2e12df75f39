//! Dispersal and jump kernels: densities, Fourier transforms, exact
//! samplers, and validation of the model conditions (unit mass, transform
//! strictly inside the unit disk away from zero, tail class).

mod stable;

use crate::fit::log_log_slope;
use crate::quad::{adaptive_simpson, chunked, GaussLegendre};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

pub use stable::TAIL_SWITCH;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("dimension must be 1 or 2, got {0}")]
    BadDimension(usize),
    #[error("scale must be positive and finite, got {0}")]
    BadScale(f64),
    #[error("alpha must lie in (0, 2], got {0}")]
    BadAlpha(f64),
    #[error("evaluation point has a non-finite coordinate")]
    NonFinitePoint,
    #[error("jump rate must be positive and finite, got {0}")]
    BadJumpRate(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    /// `hat a(p) = exp(-(s|p|)^alpha)`, alpha in (0, 2].
    SymmetricStable,
    /// `hat a(p) = exp(-s|p|)`; the alpha = 1 stable law.
    Cauchy,
    /// `hat a(p) = exp(-(s|p|)^2 / 2)`; standard normal at scale s.
    Gaussian,
    /// Uniform on `[-s, s]` (d=1) or the disk of radius s (d=2).
    CompactUniform,
}

/// Isotropic dispersal density `a` with unit total mass.
#[derive(Clone, Debug)]
pub struct DispersalKernel {
    family: KernelFamily,
    dimension: usize,
    alpha: f64,
    scale: f64,
    gl: GaussLegendre,
}

impl PartialEq for DispersalKernel {
    fn eq(&self, other: &Self) -> bool {
        self.family == other.family
            && self.dimension == other.dimension
            && self.alpha == other.alpha
            && self.scale == other.scale
    }
}

fn check_dim_scale(dimension: usize, scale: f64) -> Result<(), KernelError> {
    if dimension != 1 && dimension != 2 {
        return Err(KernelError::BadDimension(dimension));
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(KernelError::BadScale(scale));
    }
    Ok(())
}

impl DispersalKernel {
    pub fn symmetric_stable(alpha: f64, dimension: usize, scale: f64) -> Result<Self, KernelError> {
        check_dim_scale(dimension, scale)?;
        if !(alpha.is_finite() && alpha > 0.0 && alpha <= 2.0) {
            return Err(KernelError::BadAlpha(alpha));
        }
        Ok(Self {
            family: KernelFamily::SymmetricStable,
            dimension,
            alpha,
            scale,
            gl: GaussLegendre::new(16),
        })
    }

    pub fn cauchy(dimension: usize, scale: f64) -> Result<Self, KernelError> {
        check_dim_scale(dimension, scale)?;
        Ok(Self {
            family: KernelFamily::Cauchy,
            dimension,
            alpha: 1.0,
            scale,
            gl: GaussLegendre::new(16),
        })
    }

    pub fn gaussian(dimension: usize, scale: f64) -> Result<Self, KernelError> {
        check_dim_scale(dimension, scale)?;
        Ok(Self {
            family: KernelFamily::Gaussian,
            dimension,
            alpha: 2.0,
            scale,
            gl: GaussLegendre::new(16),
        })
    }

    pub fn compact_uniform(dimension: usize, scale: f64) -> Result<Self, KernelError> {
        check_dim_scale(dimension, scale)?;
        Ok(Self {
            family: KernelFamily::CompactUniform,
            dimension,
            alpha: f64::INFINITY,
            scale,
            gl: GaussLegendre::new(16),
        })
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Tail exponent: the stable index for stable/Cauchy, 2 for Gaussian
    /// (second moment finite), infinite for compact support.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// True when the tail is heavy enough for a stationary pair structure
    /// to exist in this dimension: `alpha < 1` on the line, `alpha < 2`
    /// in the plane.
    pub fn heavy_tail(&self) -> bool {
        match self.family {
            KernelFamily::SymmetricStable | KernelFamily::Cauchy => match self.dimension {
                1 => self.alpha < 1.0,
                _ => self.alpha < 2.0,
            },
            KernelFamily::Gaussian | KernelFamily::CompactUniform => false,
        }
    }

    /// Fourier transform `hat a(p) = ∫ exp(-i p·u) a(u) du`, real for the
    /// shipped (even) families. `hat a(0) = 1` exactly.
    pub fn fourier_hat(&self, p: &[f64]) -> f64 {
        let q = norm(p) * self.scale;
        self.hat_radial_scaled(q)
    }

    /// Transform as a function of `|p|` (isotropy).
    pub fn fourier_hat_radial(&self, p_norm: f64) -> f64 {
        self.hat_radial_scaled(p_norm.abs() * self.scale)
    }

    fn hat_radial_scaled(&self, q: f64) -> f64 {
        match self.family {
            KernelFamily::SymmetricStable => (-q.powf(self.alpha)).exp(),
            KernelFamily::Cauchy => (-q).exp(),
            KernelFamily::Gaussian => (-q * q / 2.0).exp(),
            KernelFamily::CompactUniform => match self.dimension {
                1 => {
                    if q == 0.0 {
                        1.0
                    } else {
                        q.sin() / q
                    }
                }
                _ => {
                    if q == 0.0 {
                        1.0
                    } else {
                        2.0 * libm::j1(q) / q
                    }
                }
            },
        }
    }

    /// `|p|` beyond which `|hat a|` stays below `eps` (envelope bound for
    /// the compact family, whose transform decays only algebraically).
    pub fn fourier_cutoff(&self, eps: f64) -> f64 {
        let c = match self.family {
            KernelFamily::SymmetricStable => stable::hat_cutoff(self.alpha, eps),
            KernelFamily::Cauchy => (1.0 / eps).ln(),
            KernelFamily::Gaussian => (2.0 * (1.0 / eps).ln()).sqrt(),
            // |sinc| and |2 J1(q)/q| fall like a power; cap the range.
            KernelFamily::CompactUniform => (1.0 / eps).min(1e4),
        };
        c / self.scale
    }

    /// Density `a(x) >= 0`; rejects non-finite coordinates.
    pub fn density(&self, x: &[f64]) -> Result<f64, KernelError> {
        if x.iter().any(|c| !c.is_finite()) {
            return Err(KernelError::NonFinitePoint);
        }
        Ok(self.density_radial(norm(x)))
    }

    /// Density as a function of distance (all families are isotropic).
    pub fn density_radial(&self, r: f64) -> f64 {
        let s = self.scale;
        let z = r.abs() / s;
        let vol_scale = s.powi(self.dimension as i32);
        match self.family {
            KernelFamily::Cauchy => cauchy_reduced(self.dimension, z) / vol_scale,
            KernelFamily::Gaussian => {
                let norm_c = (2.0 * PI).powf(self.dimension as f64 / 2.0);
                (-z * z / 2.0).exp() / (norm_c * vol_scale)
            }
            KernelFamily::CompactUniform => {
                let inside = z <= 1.0;
                let c = match self.dimension {
                    1 => 0.5,
                    _ => 1.0 / PI,
                };
                if inside {
                    c / vol_scale
                } else {
                    0.0
                }
            }
            KernelFamily::SymmetricStable => {
                let a = self.alpha;
                let reduced = if a == 1.0 {
                    cauchy_reduced(self.dimension, z)
                } else if a == 2.0 {
                    // hat = exp(-q^2) inverts to a normal with variance 2
                    let norm_c = (4.0 * PI).powf(self.dimension as f64 / 2.0);
                    (-z * z / 4.0).exp() / norm_c
                } else if z > TAIL_SWITCH {
                    stable::tail_density(a, self.dimension, z)
                } else if self.dimension == 1 {
                    stable::inversion_density_d1(a, z, &self.gl)
                } else {
                    stable::inversion_density_d2(a, z, &self.gl)
                };
                reduced / vol_scale
            }
        }
    }

    /// Exact sampler for a displacement with density `a`. Writes into the
    /// first `dimension()` entries of the returned array.
    pub fn sample_displacement<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        let s = self.scale;
        let mut out = [0.0; 2];
        match self.family {
            KernelFamily::Gaussian => {
                for slot in out.iter_mut().take(self.dimension) {
                    let z: f64 = StandardNormal.sample(rng);
                    *slot = s * z;
                }
            }
            KernelFamily::Cauchy => self.sample_cauchy(rng, &mut out),
            KernelFamily::CompactUniform => match self.dimension {
                1 => out[0] = s * (2.0 * rng.random::<f64>() - 1.0),
                _ => {
                    let r = s * rng.random::<f64>().sqrt();
                    let phi = 2.0 * PI * rng.random::<f64>();
                    out[0] = r * phi.cos();
                    out[1] = r * phi.sin();
                }
            },
            KernelFamily::SymmetricStable => {
                let a = self.alpha;
                if a == 1.0 {
                    self.sample_cauchy(rng, &mut out);
                } else if a == 2.0 {
                    // variance 2 per axis at unit scale
                    for slot in out.iter_mut().take(self.dimension) {
                        let z: f64 = StandardNormal.sample(rng);
                        *slot = s * std::f64::consts::SQRT_2 * z;
                    }
                } else if self.dimension == 1 {
                    out[0] = s * sample_stable_1d(a, rng);
                } else {
                    // subordinated Gaussian: X = sqrt(2 S) Z with S positive
                    // (alpha/2)-stable, Laplace transform exp(-t^{alpha/2})
                    let ssub = sample_positive_stable(a / 2.0, rng);
                    let fac = s * (2.0 * ssub).sqrt();
                    let z1: f64 = StandardNormal.sample(rng);
                    let z2: f64 = StandardNormal.sample(rng);
                    out[0] = fac * z1;
                    out[1] = fac * z2;
                }
            }
        }
        out
    }

    fn sample_cauchy<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64; 2]) {
        let s = self.scale;
        match self.dimension {
            1 => {
                let u = open_unit(rng.random::<f64>());
                out[0] = s * (PI * (u - 0.5)).tan();
            }
            _ => {
                // multivariate Cauchy = Gaussian pair over an independent
                // half-normal; characteristic function exp(-s|p|)
                let z1: f64 = StandardNormal.sample(rng);
                let z2: f64 = StandardNormal.sample(rng);
                let mut w: f64 = StandardNormal.sample(rng);
                while w == 0.0 {
                    w = StandardNormal.sample(rng);
                }
                out[0] = s * z1 / w.abs();
                out[1] = s * z2 / w.abs();
            }
        }
    }

    /// Numeric check of the model conditions; violations come back as
    /// flags, never as errors.
    pub fn validate(&self) -> ValidationReport {
        let norm_residual = (self.numeric_mass() - 1.0).abs();
        // transform magnitude on a grid excluding zero
        let p_hi = self.fourier_cutoff(1e-12);
        let p_lo = 1e-4 / self.scale;
        let n_grid = 2048;
        let mut max_abs_hat: f64 = 0.0;
        for i in 0..n_grid {
            let t = i as f64 / (n_grid - 1) as f64;
            let p = p_lo * (p_hi / p_lo).powf(t);
            max_abs_hat = max_abs_hat.max(self.fourier_hat_radial(p).abs());
        }
        // tail exponent from the density over a decade of radii; the window
        // start scales with the known decay of the subleading tail term so
        // the fitted slope sees the leading power only
        let r_lo = self.tail_fit_start();
        let mut rs = Vec::new();
        let mut ds = Vec::new();
        for i in 0..16 {
            let r = r_lo * 10f64.powf(i as f64 / 15.0);
            let a = self.density_radial(r);
            if a > 1e-280 {
                rs.push(r);
                ds.push(a);
            }
        }
        let tail_slope = if rs.len() >= 6 {
            log_log_slope(&rs, &ds).map(|(m, _)| m)
        } else {
            None
        };
        let heavy_tail = self.heavy_tail();
        let expected = -(self.alpha + self.dimension as f64);
        let tail_fit_ok = if heavy_tail {
            Some(
                tail_slope
                    .map(|m| (m - expected).abs() <= 0.05 * expected.abs())
                    .unwrap_or(false),
            )
        } else {
            None
        };
        let norm_tol = if self.dimension == 1 { 1e-6 } else { 1e-4 };
        ValidationReport {
            norm_residual,
            max_abs_hat,
            tail_slope,
            heavy_tail,
            normalization_ok: norm_residual < norm_tol,
            hat_bound_ok: max_abs_hat < 1.0,
            hat_integrable: self.family != KernelFamily::CompactUniform,
            tail_fit_ok,
        }
    }

    /// Lower edge of the tail-fit window. The power-tail families carry a
    /// subleading term a factor `~ r^{-alpha}` below the leading one; start
    /// the fit where that correction biases the slope by under five
    /// percent, and never below ten scale units.
    fn tail_fit_start(&self) -> f64 {
        let base = 10.0 * self.scale;
        match self.family {
            KernelFamily::SymmetricStable | KernelFamily::Cauchy => {
                let mut leading: Option<(f64, f64)> = None;
                for k in 1..8 {
                    let (c, pw) = stable::series_term(self.alpha.min(2.0), self.dimension, k);
                    if c == 0.0 {
                        continue;
                    }
                    match leading {
                        None => leading = Some((c, pw)),
                        Some((c1, pw1)) => {
                            let delta = pw - pw1;
                            let target = 0.05 * (self.alpha + self.dimension as f64) / delta;
                            let r_star = ((c / c1).abs() / target).powf(1.0 / delta);
                            return base.max(r_star * self.scale);
                        }
                    }
                }
                base
            }
            _ => base,
        }
    }

    /// Numeric total mass. Closed-form families integrate their density
    /// directly; the stable family goes through the transform identity for
    /// the core plus the tail series for the remainder.
    fn numeric_mass(&self) -> f64 {
        let s = self.scale;
        match self.family {
            KernelFamily::SymmetricStable if self.alpha < 2.0 && self.alpha != 1.0 => {
                let z = 30.0;
                let within = if self.dimension == 1 {
                    stable::mass_within_d1(self.alpha, z, &self.gl)
                } else {
                    stable::mass_within_d2(self.alpha, z, &self.gl)
                };
                within + stable::tail_mass(self.alpha, self.dimension, z)
            }
            _ => {
                // direct quadrature of the density plus an analytic tail
                match self.dimension {
                    1 => {
                        let x_max = match self.family {
                            KernelFamily::Cauchy => 1e3 * s,
                            KernelFamily::CompactUniform => s,
                            _ => 14.0 * s,
                        };
                        let body = 2.0
                            * adaptive_simpson(&|x: f64| self.density_radial(x), 0.0, x_max, 1e-11);
                        let tail = match self.family {
                            // ∫_{|x|>X} s dx / (pi (s^2+x^2)) = 1 - (2/pi) atan(X/s)
                            KernelFamily::Cauchy => 1.0 - 2.0 / PI * (x_max / s).atan(),
                            _ => 0.0,
                        };
                        body + tail
                    }
                    _ => {
                        let r_max = match self.family {
                            KernelFamily::Cauchy => 1e3 * s,
                            KernelFamily::CompactUniform => s,
                            _ => 14.0 * s,
                        };
                        let body = chunked(
                            &|r: f64| 2.0 * PI * r * self.density_radial(r),
                            0.0,
                            r_max,
                            r_max / 512.0,
                            &self.gl,
                        );
                        let tail = match self.family {
                            // ∫_X^∞ s r (s^2+r^2)^{-3/2} dr = s / sqrt(s^2+X^2)
                            KernelFamily::Cauchy => s / (s * s + r_max * r_max).sqrt(),
                            _ => 0.0,
                        };
                        body + tail
                    }
                }
            }
        }
    }
}

/// Relocation kernel `J = rate * (probability density)`; the total mass
/// `∫ J = rate` is the per-particle jump intensity and need not be one.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpKernel {
    pub shape: DispersalKernel,
    pub rate: f64,
}

impl JumpKernel {
    pub fn new(shape: DispersalKernel, rate: f64) -> Result<Self, KernelError> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(KernelError::BadJumpRate(rate));
        }
        Ok(Self { shape, rate })
    }

    /// `hat J(p)`; `hat J(0)` equals the total mass.
    pub fn fourier_hat_radial(&self, p_norm: f64) -> f64 {
        self.rate * self.shape.fourier_hat_radial(p_norm)
    }

    pub fn total_mass(&self) -> f64 {
        self.rate
    }
}

/// Outcome of [`DispersalKernel::validate`]. Serialized as the validation
/// JSON consumed by the CLI.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidationReport {
    pub norm_residual: f64,
    pub max_abs_hat: f64,
    pub tail_slope: Option<f64>,
    pub heavy_tail: bool,
    pub normalization_ok: bool,
    pub hat_bound_ok: bool,
    pub hat_integrable: bool,
    pub tail_fit_ok: Option<bool>,
}

fn cauchy_reduced(dim: usize, z: f64) -> f64 {
    match dim {
        1 => 1.0 / (PI * (1.0 + z * z)),
        _ => 1.0 / (2.0 * PI) * (1.0 + z * z).powf(-1.5),
    }
}

fn norm(x: &[f64]) -> f64 {
    match x.len() {
        1 => x[0].abs(),
        _ => x.iter().map(|c| c * c).sum::<f64>().sqrt(),
    }
}

fn open_unit(u: f64) -> f64 {
    u.clamp(1e-16, 1.0 - 1e-16)
}

/// Chambers-Mallows-Stuck transform for the symmetric stable law with
/// characteristic function `exp(-|p|^alpha)`, `alpha != 1, 2`.
fn sample_stable_1d<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let u = open_unit(rng.random::<f64>());
    let theta = PI * (u - 0.5);
    let w: f64 = Exp1.sample(rng);
    let w = w.max(1e-300);
    let num = (alpha * theta).sin();
    let den = theta.cos().powf(1.0 / alpha);
    let tail = (((1.0 - alpha) * theta).cos() / w).powf((1.0 - alpha) / alpha);
    num / den * tail
}

/// Positive beta-stable variable with Laplace transform `exp(-t^beta)`,
/// `0 < beta < 1` (Kanter's representation), computed in logs to stay
/// stable as beta approaches 1.
fn sample_positive_stable<R: Rng + ?Sized>(beta: f64, rng: &mut R) -> f64 {
    debug_assert!(beta > 0.0 && beta < 1.0);
    let u = open_unit(rng.random::<f64>());
    let theta = PI * u;
    let e: f64 = Exp1.sample(rng);
    let e = e.max(1e-300);
    let ln_s = (beta * theta).sin().ln() + (1.0 - beta) / beta * ((1.0 - beta) * theta).sin().ln()
        - theta.sin().ln() / beta
        - (1.0 - beta) / beta * e.ln();
    ln_s.exp()
}
