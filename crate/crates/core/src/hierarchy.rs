//! Discrete-torus solver for the correlation-function hierarchy.
//!
//! Order `n` correlation functions are translation invariant, so they live
//! on `(n-1)` difference coordinates, each a point of the periodic lattice
//! `{0, h, .., (M-1) h}^d`. The dual generator acts as
//!
//! `(L_n k) = -n k + sum_i (convolution of k with the kernel in the i-th
//! particle coordinate)`,
//!
//! which in difference coordinates is an axis convolution for each of the
//! first `n-1` particles and a simultaneous (diagonal) shift of all
//! difference coordinates for the reference particle. Time stepping is
//! explicit midpoint; the operator is bounded by `2n`, so `dt <= 0.1/n`
//! keeps it stable and, for the sampled kernel, positivity preserving.
//!
//! The stationary field is assembled as the time integral of the semigroup
//! applied to the source, after removing the source's lattice zero mode:
//! on a finite torus the uniform component of the source has no stationary
//! preimage (it drives the linear-in-time global fluctuation growth), and
//! its removal is the lattice image of the fact that the whole-space
//! formulas assign zero measure to the single point `p = 0`. The dropped
//! uniform level is reported alongside the residual.

use crate::geometry::min_image;
use crate::kernel::DispersalKernel;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HierarchyError {
    #[error("lattice size must be a positive even number, got {0}")]
    BadSize(usize),
    #[error("spacing must be positive and finite, got {0}")]
    BadSpacing(f64),
    #[error("order must be 1, 2 or 3, got {0}")]
    BadOrder(usize),
    #[error("field/kernel lattice mismatch: {0}")]
    LatticeMismatch(String),
    #[error("time step must satisfy 0 < dt <= {max}, got {got}")]
    BadTimeStep { got: f64, max: f64 },
    #[error("stationary construction requires a heavy-tailed kernel; {0:?} with alpha {1} in d={2} is light")]
    LightTail(crate::kernel::KernelFamily, f64, usize),
    #[error("non-finite field value produced at t={0}")]
    NonFinite(f64),
    #[error("lattice too large for dense convolution: {0} site-kernel products")]
    TooLarge(u128),
}

/// How the continuum kernel is placed on the lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discretization {
    /// Point values of the torus-periodized density, normalized to unit
    /// mass. Nonnegative, so order and positivity are preserved exactly;
    /// the lattice symbol carries aliasing from above the Nyquist band.
    Sampled,
    /// Fourier coefficients truncated at the lattice band: the symbol
    /// equals the continuum transform on every represented mode (used for
    /// closed-form cross-checks), at the price of small negative ripples
    /// in real space.
    BandLimited,
}

/// Dispersal kernel periodized and discretized on the lattice torus.
#[derive(Clone, Debug)]
pub struct LatticeKernel {
    pub dim: usize,
    pub m: usize,
    pub h: f64,
    pub mode: Discretization,
    /// Probability weights, one per lattice site (row-major in d = 2).
    weights: Vec<f64>,
}

impl LatticeKernel {
    /// Build by summing the Fourier series of the periodized density; the
    /// dual-space sum is the Poisson-summation form of wrapping the density
    /// around the torus, truncated where the transform falls below 1e-15.
    pub fn new(
        kernel: &DispersalKernel,
        m: usize,
        h: f64,
        mode: Discretization,
    ) -> Result<Self, HierarchyError> {
        if m < 4 || !m.is_multiple_of(2) {
            return Err(HierarchyError::BadSize(m));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(HierarchyError::BadSpacing(h));
        }
        let dim = kernel.dimension();
        let length = m as f64 * h;
        let base = 2.0 * PI / length;
        let m_cut = match mode {
            Discretization::Sampled => (kernel.fourier_cutoff(1e-15) / base).ceil() as i64,
            Discretization::BandLimited => (m as i64 - 1) / 2,
        };
        let n_sites = m.pow(dim as u32);
        let work = n_sites as u128 * (2 * m_cut as u128 + 1).pow(dim as u32);
        if work > 2_000_000_000 {
            return Err(HierarchyError::TooLarge(work));
        }
        let mut weights = vec![0.0; n_sites];
        match dim {
            1 => {
                for (j, w) in weights.iter_mut().enumerate() {
                    let x = j as f64 * h;
                    let mut s = 1.0; // m = 0 term
                    for mm in 1..=m_cut {
                        let p = base * mm as f64;
                        s += 2.0 * kernel.fourier_hat_radial(p) * (p * x).cos();
                    }
                    *w = s * h / length;
                }
            }
            _ => {
                for jx in 0..m {
                    for jy in 0..m {
                        let x = jx as f64 * h;
                        let y = jy as f64 * h;
                        let mut s = 0.0;
                        for mx in -m_cut..=m_cut {
                            let cx = (base * mx as f64 * x).cos();
                            for my in -m_cut..=m_cut {
                                let p = base * ((mx * mx + my * my) as f64).sqrt();
                                s += kernel.fourier_hat_radial(p)
                                    * cx
                                    * (base * my as f64 * y).cos();
                            }
                        }
                        weights[jx * m + jy] = s * h * h / (length * length);
                    }
                }
            }
        }
        if mode == Discretization::Sampled {
            // exact unit mass so constants are annihilated exactly
            for w in weights.iter_mut() {
                *w = w.max(0.0);
            }
            let total: f64 = weights.iter().sum();
            for w in weights.iter_mut() {
                *w /= total;
            }
        }
        Ok(Self {
            dim,
            m,
            h,
            mode,
            weights,
        })
    }

    pub fn torus_length(&self) -> f64 {
        self.m as f64 * self.h
    }

    /// Periodized density values `a_L(x_j)` (weights divided by the cell
    /// volume); these are what the hierarchy source terms use.
    pub fn density_values(&self) -> Vec<f64> {
        let cell = self.h.powi(self.dim as i32);
        self.weights.iter().map(|w| w / cell).collect()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Density value at the site with (possibly negative) per-axis indices.
    fn density_at(&self, idx: &[i64]) -> f64 {
        let cell = self.h.powi(self.dim as i32);
        self.weights[self.site(idx)] / cell
    }

    fn site(&self, idx: &[i64]) -> usize {
        let m = self.m as i64;
        let mut flat = 0usize;
        for &i in idx {
            flat = flat * self.m + i.rem_euclid(m) as usize;
        }
        flat
    }
}

/// Correlation-function field of order `n` in difference coordinates:
/// `n - 1` lattice coordinates of `d` axes each, row-major storage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeField {
    pub dim: usize,
    pub m: usize,
    pub h: f64,
    pub order: usize,
    pub rho: f64,
    pub values: Vec<f64>,
}

impl LatticeField {
    pub fn constant(
        dim: usize,
        m: usize,
        h: f64,
        order: usize,
        rho: f64,
        value: f64,
    ) -> Result<Self, HierarchyError> {
        if !(1..=3).contains(&order) {
            return Err(HierarchyError::BadOrder(order));
        }
        if dim != 1 && dim != 2 {
            return Err(HierarchyError::LatticeMismatch(format!("dimension {dim}")));
        }
        let axes = dim * (order - 1);
        let len = m.pow(axes as u32).max(1);
        Ok(Self {
            dim,
            m,
            h,
            order,
            rho,
            values: vec![value; len],
        })
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, &v| a.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    fn check_compatible(&self, lk: &LatticeKernel) -> Result<(), HierarchyError> {
        if self.dim != lk.dim || self.m != lk.m || (self.h - lk.h).abs() > 1e-12 * lk.h {
            return Err(HierarchyError::LatticeMismatch(format!(
                "field {}^{} @ h={} vs kernel {}^{} @ h={}",
                self.m, self.dim, self.h, lk.m, lk.dim, lk.h
            )));
        }
        Ok(())
    }

    /// Decompose a flat index into per-axis indices.
    fn unflatten(&self, mut flat: usize, idx: &mut [i64]) {
        for slot in idx.iter_mut().rev() {
            *slot = (flat % self.m) as i64;
            flat /= self.m;
        }
    }

    fn flatten(&self, idx: &[i64]) -> usize {
        let m = self.m as i64;
        let mut flat = 0usize;
        for &i in idx {
            flat = flat * self.m + i.rem_euclid(m) as usize;
        }
        flat
    }

    /// Value at difference coordinates given as per-axis lattice indices.
    pub fn at(&self, idx: &[i64]) -> f64 {
        self.values[self.flatten(idx)]
    }
}

/// Apply the dual generator `-n k + sum_i (kernel convolution in particle
/// i)` in difference coordinates.
pub fn apply_dual_generator(
    field: &LatticeField,
    lk: &LatticeKernel,
) -> Result<LatticeField, HierarchyError> {
    field.check_compatible(lk)?;
    let n = field.order;
    let mut out = field.clone();
    if n == 1 {
        // a constant density field: -k + (sum of weights) k = 0
        let w_total: f64 = lk.weights.iter().sum();
        out.values[0] = (w_total - 1.0) * field.values[0];
        return Ok(out);
    }
    let blocks = n - 1;
    let d = field.dim;
    let m = field.m as i64;
    let mut acc = vec![0.0; field.values.len()];
    let mut idx = vec![0i64; blocks * d];
    let mut shifted = vec![0i64; blocks * d];
    let mut kidx = vec![0i64; d];

    for (flat, slot) in acc.iter_mut().enumerate() {
        field.unflatten(flat, &mut idx);
        let mut s = -(n as f64) * field.values[flat];
        // particles 0..blocks-1: convolve in the corresponding block
        for b in 0..blocks {
            let mut conv = 0.0;
            for (kflat, &w) in lk.weights.iter().enumerate() {
                let mut rem = kflat;
                for a in (0..d).rev() {
                    kidx[a] = (rem % lk.m) as i64;
                    rem /= lk.m;
                }
                shifted.copy_from_slice(&idx);
                for a in 0..d {
                    shifted[b * d + a] = (idx[b * d + a] - kidx[a]).rem_euclid(m);
                }
                conv += w * field.values[field.flatten(&shifted)];
            }
            s += conv;
        }
        // reference particle: simultaneous shift of every block
        let mut conv = 0.0;
        for (kflat, &w) in lk.weights.iter().enumerate() {
            let mut rem = kflat;
            for a in (0..d).rev() {
                kidx[a] = (rem % lk.m) as i64;
                rem /= lk.m;
            }
            for b in 0..blocks {
                for a in 0..d {
                    shifted[b * d + a] = (idx[b * d + a] + kidx[a]).rem_euclid(m);
                }
            }
            conv += w * field.values[field.flatten(&shifted)];
        }
        s += conv;
        *slot = s;
    }
    out.values = acc;
    Ok(out)
}

/// Hierarchy source `f^{(n)}`: couples order `n` to order `n - 1`.
///
/// Order 2 from the constant intensity: `f(x) = rho (a_L(x) + a_L(-x))`.
/// Order 3 from a pair field `k2`, in differences `(y1, y2)`:
/// `k2(y2)(a(y1-y2)+a(y1)) + k2(y1)(a(y2-y1)+a(y2)) + k2(y1-y2)(a(-y1)+a(-y2))`.
pub fn source_term(
    lower: &LatticeField,
    lk: &LatticeKernel,
) -> Result<LatticeField, HierarchyError> {
    lower.check_compatible(lk)?;
    let n = lower.order + 1;
    let mut out = LatticeField::constant(lower.dim, lower.m, lower.h, n, lower.rho, 0.0)?;
    let d = lower.dim;
    match n {
        2 => {
            let rho = lower.values[0];
            let mut idx = vec![0i64; d];
            let mut neg = vec![0i64; d];
            let mut scratch = out.clone();
            for flat in 0..scratch.values.len() {
                scratch.unflatten(flat, &mut idx);
                for a in 0..d {
                    neg[a] = -idx[a];
                }
                scratch.values[flat] = rho * (lk.density_at(&idx) + lk.density_at(&neg));
            }
            out = scratch;
        }
        3 => {
            let mut idx = vec![0i64; 2 * d];
            let mut tmp = vec![0i64; d];
            let mut tmp2 = vec![0i64; d];
            let mut scratch = out.clone();
            for flat in 0..scratch.values.len() {
                scratch.unflatten(flat, &mut idx);
                let (y1, y2) = idx.split_at(d);
                let k2_y2 = lower.at(y2);
                let k2_y1 = lower.at(y1);
                for a in 0..d {
                    tmp[a] = y1[a] - y2[a];
                }
                let k2_diff = lower.at(&tmp);
                let s1 = lk.density_at(&tmp) + lk.density_at(y1);
                for a in 0..d {
                    tmp2[a] = y2[a] - y1[a];
                }
                let s2 = lk.density_at(&tmp2) + lk.density_at(y2);
                for a in 0..d {
                    tmp[a] = -y1[a];
                    tmp2[a] = -y2[a];
                }
                let s3 = lk.density_at(&tmp) + lk.density_at(&tmp2);
                scratch.values[flat] = k2_y2 * s1 + k2_y1 * s2 + k2_diff * s3;
            }
            out = scratch;
        }
        _ => return Err(HierarchyError::BadOrder(n)),
    }
    Ok(out)
}

fn default_dt(order: usize) -> f64 {
    0.1 / order as f64
}

fn midpoint_step(
    field: &mut LatticeField,
    lk: &LatticeKernel,
    source: Option<&LatticeField>,
    dt: f64,
) -> Result<(), HierarchyError> {
    let l1 = apply_dual_generator(field, lk)?;
    let mut half = field.clone();
    for i in 0..half.values.len() {
        let f = source.map_or(0.0, |s| s.values[i]);
        half.values[i] += 0.5 * dt * (l1.values[i] + f);
    }
    let l2 = apply_dual_generator(&half, lk)?;
    for i in 0..field.values.len() {
        let f = source.map_or(0.0, |s| s.values[i]);
        field.values[i] += dt * (l2.values[i] + f);
    }
    Ok(())
}

/// Evolve `dk/dt = L_n k + f` from the given initial field to time `t`
/// with a time-constant source (explicit midpoint, order 2 in `dt`).
pub fn evolve(
    initial: &LatticeField,
    lk: &LatticeKernel,
    source: Option<&LatticeField>,
    t: f64,
    dt: Option<f64>,
) -> Result<LatticeField, HierarchyError> {
    initial.check_compatible(lk)?;
    if let Some(src) = source {
        if src.values.len() != initial.values.len() || src.order != initial.order {
            return Err(HierarchyError::LatticeMismatch(
                "source does not match field".into(),
            ));
        }
    }
    let dt_max = default_dt(initial.order);
    let dt = dt.unwrap_or(dt_max);
    if !(dt > 0.0 && dt <= dt_max + 1e-12) {
        return Err(HierarchyError::BadTimeStep {
            got: dt,
            max: dt_max,
        });
    }
    let mut field = initial.clone();
    if t == 0.0 {
        return Ok(field);
    }
    let steps = (t / dt).ceil() as usize;
    let dt_eff = t / steps as f64;
    for s in 0..steps {
        midpoint_step(&mut field, lk, source, dt_eff)?;
        if field.values.iter().any(|v| !v.is_finite()) {
            return Err(HierarchyError::NonFinite((s + 1) as f64 * dt_eff));
        }
    }
    Ok(field)
}

/// Jointly evolve the order-2 and order-3 fields from Poisson initial data
/// (`k2 = rho^2`, `k3 = rho^3`): the order-3 source is rebuilt from the
/// current order-2 field at each stage, so the recursion is staged exactly
/// as in the evolution equations.
pub fn evolve_pair_triple(
    rho: f64,
    lk: &LatticeKernel,
    t: f64,
    dt: Option<f64>,
) -> Result<(LatticeField, LatticeField), HierarchyError> {
    let dt_max = default_dt(3);
    let dt = dt.unwrap_or(dt_max);
    if !(dt > 0.0 && dt <= dt_max + 1e-12) {
        return Err(HierarchyError::BadTimeStep {
            got: dt,
            max: dt_max,
        });
    }
    let k1 = LatticeField::constant(lk.dim, lk.m, lk.h, 1, rho, rho)?;
    let f2 = source_term(&k1, lk)?;
    let mut k2 = LatticeField::constant(lk.dim, lk.m, lk.h, 2, rho, rho * rho)?;
    let mut k3 = LatticeField::constant(lk.dim, lk.m, lk.h, 3, rho, rho.powi(3))?;
    if t == 0.0 {
        return Ok((k2, k3));
    }
    let steps = (t / dt).ceil() as usize;
    let dt_eff = t / steps as f64;
    for _ in 0..steps {
        let l2 = apply_dual_generator(&k2, lk)?;
        let f3 = source_term(&k2, lk)?;
        let l3 = apply_dual_generator(&k3, lk)?;
        let mut k2_half = k2.clone();
        let mut k3_half = k3.clone();
        for i in 0..k2.values.len() {
            k2_half.values[i] += 0.5 * dt_eff * (l2.values[i] + f2.values[i]);
        }
        for i in 0..k3.values.len() {
            k3_half.values[i] += 0.5 * dt_eff * (l3.values[i] + f3.values[i]);
        }
        let l2h = apply_dual_generator(&k2_half, lk)?;
        let f3h = source_term(&k2_half, lk)?;
        let l3h = apply_dual_generator(&k3_half, lk)?;
        for i in 0..k2.values.len() {
            k2.values[i] += dt_eff * (l2h.values[i] + f2.values[i]);
        }
        for i in 0..k3.values.len() {
            k3.values[i] += dt_eff * (l3h.values[i] + f3h.values[i]);
        }
    }
    Ok((k2, k3))
}

/// Stationary field of the given order plus its residual diagnostics.
#[derive(Clone, Debug)]
pub struct StationaryOutcome {
    pub field: LatticeField,
    /// Sup norm of `L k + f0` with the zero-mode-projected source `f0`.
    pub residual_sup: f64,
    /// Sup norm of the projected source.
    pub source_sup: f64,
    /// Uniform source level removed before integration (`mean f`), the
    /// finite-volume zero mode with no stationary preimage.
    pub dropped_uniform_source: f64,
    /// Time horizon at which the doubling-window truncation rule fired.
    pub horizon: f64,
}

/// Stationary correlation field `k = ∫_0^T e^{tL} f0 dt + rho^n` with the
/// truncation `T` chosen by doubling windows until the increment falls
/// below 1e-4 of the accumulated structural part.
pub fn stationary_fixed_point(
    kernel: &DispersalKernel,
    lk: &LatticeKernel,
    rho: f64,
    order: usize,
    dt: Option<f64>,
) -> Result<StationaryOutcome, HierarchyError> {
    if !kernel.heavy_tail() {
        return Err(HierarchyError::LightTail(
            kernel.family(),
            kernel.alpha(),
            kernel.dimension(),
        ));
    }
    match order {
        2 => {
            let k1 = LatticeField::constant(lk.dim, lk.m, lk.h, 1, rho, rho)?;
            let f2 = source_term(&k1, lk)?;
            stationary_from_source(&f2, lk, rho, dt)
        }
        3 => {
            let inner = stationary_fixed_point(kernel, lk, rho, 2, dt)?;
            let f3 = source_term(&inner.field, lk)?;
            stationary_from_source(&f3, lk, rho, dt)
        }
        _ => Err(HierarchyError::BadOrder(order)),
    }
}

fn stationary_from_source(
    source: &LatticeField,
    lk: &LatticeKernel,
    rho: f64,
    dt: Option<f64>,
) -> Result<StationaryOutcome, HierarchyError> {
    let order = source.order;
    let mean = source.mean();
    let mut f0 = source.clone();
    for v in f0.values.iter_mut() {
        *v -= mean;
    }
    let source_sup = f0.sup_norm();
    let mut field = LatticeField::constant(source.dim, source.m, source.h, order, rho, 0.0)?;
    let mut horizon = 0.0;
    let mut window = 5.0;
    for _ in 0..10 {
        let next = evolve(&field, lk, Some(&f0), window, dt)?;
        let inc = next
            .values
            .iter()
            .zip(field.values.iter())
            .fold(0.0f64, |a, (n, p)| a.max((n - p).abs()));
        horizon += window;
        let scale = next.sup_norm().max(1e-12);
        field = next;
        if inc < 1e-4 * scale {
            break;
        }
        window *= 2.0;
    }
    let l_of_k = apply_dual_generator(&field, lk)?;
    let residual_sup = l_of_k
        .values
        .iter()
        .zip(f0.values.iter())
        .fold(0.0f64, |a, (l, f)| a.max((l + f).abs()));
    let base = rho.powi(order as i32);
    for v in field.values.iter_mut() {
        *v += base;
    }
    Ok(StationaryOutcome {
        field,
        residual_sup,
        source_sup,
        dropped_uniform_source: mean,
        horizon,
    })
}

/// Deviation of a stationary field from `rho^n`, grouped by the minimal
/// pairwise particle separation (minimum-image): the profile must sink
/// toward zero as every pair separates.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecayReport {
    /// `(separation class lower edge, max |k - rho^n|)`, increasing edges.
    pub classes: Vec<(f64, f64)>,
    pub near_dev: f64,
    pub far_dev: f64,
}

pub fn decay_profile(field: &LatticeField) -> DecayReport {
    let base = field.rho.powi(field.order as i32);
    let length = field.m as f64 * field.h;
    let n_classes = 8;
    let width = 0.5 * length / n_classes as f64;
    let mut max_dev = vec![0.0f64; n_classes];
    let d = field.dim;
    let blocks = field.order - 1;
    let mut idx = vec![0i64; blocks * d];
    for (flat, &v) in field.values.iter().enumerate() {
        field.unflatten(flat, &mut idx);
        let mut min_sep = f64::INFINITY;
        for b in 0..blocks {
            let mut s = 0.0;
            for a in 0..d {
                let dx = min_image(idx[b * d + a] as f64 * field.h, length);
                s += dx * dx;
            }
            min_sep = min_sep.min(s.sqrt());
        }
        if blocks == 2 {
            let mut s = 0.0;
            for a in 0..d {
                let dx = min_image((idx[a] - idx[d + a]) as f64 * field.h, length);
                s += dx * dx;
            }
            min_sep = min_sep.min(s.sqrt());
        }
        let class = ((min_sep / width) as usize).min(n_classes - 1);
        max_dev[class] = max_dev[class].max((v - base).abs());
    }
    let classes: Vec<(f64, f64)> = (0..n_classes)
        .map(|c| (c as f64 * width, max_dev[c]))
        .collect();
    DecayReport {
        near_dev: max_dev[0],
        far_dev: max_dev[n_classes - 1],
        classes,
    }
}

/// Sup-norm growth constants: fit `K_n <= D C^n (n!)^2` with equality at
/// the first two orders and report whether every order respects the bound.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GrowthBounds {
    pub c: f64,
    pub d: f64,
    pub sup_norms: Vec<f64>,
    pub bound_ok: bool,
}

pub fn fit_growth_bounds(sup_norms: &[f64]) -> GrowthBounds {
    assert!(sup_norms.len() >= 2, "need at least K_1 and K_2");
    let k1 = sup_norms[0];
    let k2 = sup_norms[1];
    // equality at n = 1 and n = 2: D C = K1, 4 D C^2 = K2
    let c = k2 / (4.0 * k1);
    let d = k1 * k1 * 4.0 / k2;
    let mut bound_ok = true;
    for (i, &k) in sup_norms.iter().enumerate() {
        let n = (i + 1) as i32;
        let fact: f64 = (1..=n as u64).product::<u64>() as f64;
        let bound = d * c.powi(n) * fact * fact;
        if k > bound * (1.0 + 1e-9) {
            bound_ok = false;
        }
    }
    GrowthBounds {
        c,
        d,
        sup_norms: sup_norms.to_vec(),
        bound_ok,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{pair_correlation_at_time_capped, Domain};

    fn stable_kernel(alpha: f64, dim: usize) -> DispersalKernel {
        DispersalKernel::symmetric_stable(alpha, dim, 1.0).unwrap()
    }

    #[test]
    fn sampled_weights_are_a_probability_vector() {
        let k = stable_kernel(0.5, 1);
        let lk = LatticeKernel::new(&k, 64, 0.5, Discretization::Sampled).unwrap();
        let total: f64 = lk.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
        assert!(lk.weights().iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn fourier_periodization_matches_real_space_wrap() {
        // direct wrap sum a_L(x) = sum_k a(x + kL) against the dual series;
        // the sampled weights are normalized to unit lattice mass, which is
        // a uniform rescale by the trapezoid aliasing factor, so the SHAPE
        // must match the wrap sum exactly
        let k = stable_kernel(0.5, 1);
        let lk = LatticeKernel::new(&k, 32, 0.5, Discretization::Sampled).unwrap();
        let length = lk.torus_length();
        let dens = lk.density_values();
        let mut wraps = Vec::new();
        for j in [0usize, 1, 7, 16] {
            let x = j as f64 * 0.5;
            let mut wrap = 0.0;
            // the wrap converges like 1/sqrt(k); go far enough out that its
            // own truncation sits below the tolerance
            for kk in -400_000i64..=400_000 {
                wrap += k.density_radial(x + kk as f64 * length);
            }
            wraps.push((j, wrap));
        }
        let scale = dens[0] / wraps[0].1;
        for &(j, wrap) in &wraps[1..] {
            let rel = (dens[j] / scale - wrap).abs() / wrap;
            assert!(rel < 2e-3, "site {j}: dual {} wrap {wrap}", dens[j]);
        }
        // the rescale is the aliasing mass of the sampled lattice, a few
        // percent at this spacing for so heavy a tail
        assert!((0.85..1.0).contains(&scale), "alias scale {scale}");
    }

    #[test]
    fn constants_are_annihilated() {
        let k = stable_kernel(0.5, 1);
        let lk = LatticeKernel::new(&k, 32, 1.0, Discretization::Sampled).unwrap();
        for order in [1usize, 2, 3] {
            let f = LatticeField::constant(1, 32, 1.0, order, 1.0, 3.7).unwrap();
            let out = apply_dual_generator(&f, &lk).unwrap();
            assert!(out.sup_norm() < 1e-12, "order {order}: {}", out.sup_norm());
        }
    }

    #[test]
    fn impulse_expansion_matches_hand_formula() {
        // L_2 applied to a lattice impulse: -2 delta[j] + A[j] + A[-j]
        let k = stable_kernel(0.5, 1);
        let m = 8;
        let lk = LatticeKernel::new(&k, m, 1.0, Discretization::Sampled).unwrap();
        let mut f = LatticeField::constant(1, m, 1.0, 2, 1.0, 0.0).unwrap();
        f.values[0] = 1.0;
        let out = apply_dual_generator(&f, &lk).unwrap();
        let w = lk.weights();
        for j in 0..m {
            let jm = (m - j) % m;
            let want = if j == 0 {
                -2.0 + w[0] + w[0]
            } else {
                w[j] + w[jm]
            };
            assert!(
                (out.values[j] - want).abs() < 1e-14,
                "site {j}: {} vs {want}",
                out.values[j]
            );
        }
    }

    #[test]
    fn generator_is_linear() {
        let k = stable_kernel(0.5, 1);
        let m = 16;
        let lk = LatticeKernel::new(&k, m, 1.0, Discretization::Sampled).unwrap();
        let mut u = LatticeField::constant(1, m, 1.0, 2, 1.0, 0.0).unwrap();
        let mut v = u.clone();
        for i in 0..m {
            u.values[i] = (i as f64 * 0.37).sin();
            v.values[i] = (i as f64 * 1.1).cos() + 0.2;
        }
        let (a, b) = (1.7, -0.4);
        let mut comb = u.clone();
        for i in 0..m {
            comb.values[i] = a * u.values[i] + b * v.values[i];
        }
        let lu = apply_dual_generator(&u, &lk).unwrap();
        let lv = apply_dual_generator(&v, &lk).unwrap();
        let lcomb = apply_dual_generator(&comb, &lk).unwrap();
        for i in 0..m {
            let want = a * lu.values[i] + b * lv.values[i];
            assert!((lcomb.values[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn pair_source_matches_closed_form() {
        let k = stable_kernel(0.5, 1);
        let m = 32;
        let lk = LatticeKernel::new(&k, m, 0.5, Discretization::Sampled).unwrap();
        let rho = 1.7;
        let k1 = LatticeField::constant(1, m, 0.5, 1, rho, rho).unwrap();
        let f2 = source_term(&k1, &lk).unwrap();
        let dens = lk.density_values();
        for j in 0..m {
            let want = rho * (dens[j] + dens[(m - j) % m]);
            assert!((f2.values[j] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_intensity_gives_zero_source() {
        let k = stable_kernel(0.5, 1);
        let lk = LatticeKernel::new(&k, 16, 1.0, Discretization::Sampled).unwrap();
        let k1 = LatticeField::constant(1, 16, 1.0, 1, 0.0, 0.0).unwrap();
        let f2 = source_term(&k1, &lk).unwrap();
        assert!(f2.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn triple_source_from_flat_pair_field() {
        // k2 = rho^2 collapses f3 to rho^2 sum_i sum_{j != i} a(x_i - x_j)
        let k = stable_kernel(0.5, 1);
        let m = 16;
        let lk = LatticeKernel::new(&k, m, 1.0, Discretization::Sampled).unwrap();
        let rho = 1.3;
        let k2 = LatticeField::constant(1, m, 1.0, 2, rho, rho * rho).unwrap();
        let f3 = source_term(&k2, &lk).unwrap();
        let dens = lk.density_values();
        let a = |i: i64| dens[i.rem_euclid(m as i64) as usize];
        for y1 in 0..m as i64 {
            for y2 in 0..m as i64 {
                let want = rho * rho * (a(y1 - y2) + a(y1) + a(y2 - y1) + a(y2) + a(-y1) + a(-y2));
                let got = f3.at(&[y1, y2]);
                assert!((got - want).abs() < 1e-12, "({y1},{y2}): {got} vs {want}");
            }
        }
    }

    #[test]
    fn evolve_at_zero_time_is_identity() {
        let k = stable_kernel(0.5, 1);
        let lk = LatticeKernel::new(&k, 16, 1.0, Discretization::Sampled).unwrap();
        let mut f = LatticeField::constant(1, 16, 1.0, 2, 1.0, 0.0).unwrap();
        f.values[3] = 2.0;
        let out = evolve(&f, &lk, None, 0.0, None).unwrap();
        assert_eq!(out.values, f.values);
    }

    #[test]
    fn intensity_is_conserved() {
        let k = stable_kernel(0.5, 1);
        let lk = LatticeKernel::new(&k, 16, 1.0, Discretization::Sampled).unwrap();
        let rho = 2.3;
        let k1 = LatticeField::constant(1, 16, 1.0, 1, rho, rho).unwrap();
        let out = evolve(&k1, &lk, None, 7.0, None).unwrap();
        assert!((out.values[0] - rho).abs() < 1e-12);
    }

    #[test]
    fn semigroup_property_without_source() {
        let k = stable_kernel(0.5, 1);
        let lk = LatticeKernel::new(&k, 32, 1.0, Discretization::Sampled).unwrap();
        let mut f = LatticeField::constant(1, 32, 1.0, 2, 1.0, 0.0).unwrap();
        for i in 0..32 {
            f.values[i] = (i as f64 * 0.3).sin().abs();
        }
        let dt = Some(0.05);
        let onego = evolve(&f, &lk, None, 3.0, dt).unwrap();
        let first = evolve(&f, &lk, None, 1.2, dt).unwrap();
        let second = evolve(&first, &lk, None, 1.8, dt).unwrap();
        for i in 0..32 {
            assert!(
                (onego.values[i] - second.values[i]).abs() < 1e-9,
                "site {i}"
            );
        }
    }

    #[test]
    fn constant_fields_are_equilibria_without_source() {
        let k = stable_kernel(0.5, 1);
        let lk = LatticeKernel::new(&k, 16, 1.0, Discretization::Sampled).unwrap();
        let f = LatticeField::constant(1, 16, 1.0, 2, 1.0, 4.2).unwrap();
        let out = evolve(&f, &lk, None, 5.0, None).unwrap();
        for &v in &out.values {
            assert!((v - 4.2).abs() < 1e-11);
        }
    }

    #[test]
    fn positivity_and_monotonicity_are_preserved() {
        let k = stable_kernel(0.5, 1);
        let m = 24;
        let lk = LatticeKernel::new(&k, m, 1.0, Discretization::Sampled).unwrap();
        let mut lo = LatticeField::constant(1, m, 1.0, 2, 1.0, 0.0).unwrap();
        let mut hi = lo.clone();
        let mut src = lo.clone();
        for i in 0..m {
            lo.values[i] = 0.5 + 0.5 * (i as f64 * 0.9).sin().abs();
            hi.values[i] = lo.values[i] + 0.1 + 0.1 * (i as f64).cos().abs();
            src.values[i] = 0.2 * (i as f64 * 0.31).cos().abs();
        }
        let lo_t = evolve(&lo, &lk, Some(&src), 4.0, None).unwrap();
        let hi_t = evolve(&hi, &lk, Some(&src), 4.0, None).unwrap();
        for i in 0..m {
            assert!(lo_t.values[i] >= -1e-13, "positivity at {i}");
            assert!(
                hi_t.values[i] >= lo_t.values[i] - 1e-12,
                "order lost at {i}"
            );
        }
    }

    #[test]
    fn band_limited_evolution_matches_spectral_series() {
        // the lattice route (real-space convolutions, midpoint stepping)
        // against the closed-form Fourier series on the same mode band
        let kernel = stable_kernel(0.5, 1);
        let m = 128;
        let h = 0.78125; // L = 100
        let rho = 1.0;
        let t = 5.0;
        let lk = LatticeKernel::new(&kernel, m, h, Discretization::BandLimited).unwrap();
        let k1 = LatticeField::constant(1, m, h, 1, rho, rho).unwrap();
        let f2 = source_term(&k1, &lk).unwrap();
        let init = LatticeField::constant(1, m, h, 2, rho, rho * rho).unwrap();
        let lat = evolve(&init, &lk, Some(&f2), t, Some(0.025)).unwrap();

        let radii: Vec<f64> = (0..=m / 2).map(|j| j as f64 * h).collect();
        let spec = pair_correlation_at_time_capped(
            &kernel,
            rho,
            t,
            &radii,
            Domain::Torus {
                length: m as f64 * h,
            },
            Some((m - 1) / 2),
        )
        .unwrap();
        let sup_ref = spec.values.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        let mut sup_diff = 0.0f64;
        for j in 0..=m / 2 {
            sup_diff = sup_diff.max((lat.values[j] - spec.values[j]).abs());
        }
        assert!(
            sup_diff / sup_ref < 1e-3,
            "lattice vs series: rel sup {}",
            sup_diff / sup_ref
        );
    }

    #[test]
    fn joint_staging_matches_single_order_and_hand_step() {
        let kernel = stable_kernel(0.5, 1);
        let m = 16;
        let lk = LatticeKernel::new(&kernel, m, 1.0, Discretization::Sampled).unwrap();
        let rho = 1.0;
        let (k2_joint, k3) = evolve_pair_triple(rho, &lk, 2.0, Some(0.02)).unwrap();
        let k1 = LatticeField::constant(1, m, 1.0, 1, rho, rho).unwrap();
        let f2 = source_term(&k1, &lk).unwrap();
        let init = LatticeField::constant(1, m, 1.0, 2, rho, 1.0).unwrap();
        let k2_solo = evolve(&init, &lk, Some(&f2), 2.0, Some(0.02)).unwrap();
        for i in 0..m {
            assert!((k2_joint.values[i] - k2_solo.values[i]).abs() < 1e-12);
        }
        assert!(k3.sup_norm().is_finite());

        // one midpoint step of the order-3 block, checked by hand
        let dt = 0.02;
        let f3_0 = source_term(&init, &lk).unwrap();
        let mut k3_hand = LatticeField::constant(1, m, 1.0, 3, rho, 1.0).unwrap();
        let mut k3_half = k3_hand.clone();
        for i in 0..k3_half.values.len() {
            // L applied to the constant initial field vanishes
            k3_half.values[i] += 0.5 * dt * f3_0.values[i];
        }
        let mut k2_half = init.clone();
        let l2 = apply_dual_generator(&init, &lk).unwrap();
        for i in 0..m {
            k2_half.values[i] += 0.5 * dt * (l2.values[i] + f2.values[i]);
        }
        let f3_half = source_term(&k2_half, &lk).unwrap();
        let l3_half = apply_dual_generator(&k3_half, &lk).unwrap();
        for i in 0..k3_hand.values.len() {
            k3_hand.values[i] += dt * (l3_half.values[i] + f3_half.values[i]);
        }
        let (_, k3_one) = evolve_pair_triple(rho, &lk, dt, Some(dt)).unwrap();
        for i in 0..k3_hand.values.len() {
            assert!((k3_one.values[i] - k3_hand.values[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn stationary_pair_field_matches_spectral_shape() {
        let kernel = stable_kernel(0.5, 1);
        let m = 128;
        let h = 0.78125;
        let lk = LatticeKernel::new(&kernel, m, h, Discretization::BandLimited).unwrap();
        let out = stationary_fixed_point(&kernel, &lk, 1.0, 2, None).unwrap();
        assert!(
            out.residual_sup < 1e-3 * out.source_sup,
            "residual {} vs source {}",
            out.residual_sup,
            out.source_sup
        );
        let radii: Vec<f64> = (0..=m / 2).map(|j| j as f64 * h).collect();
        let spec = crate::spectral::stationary_pair_correlation_capped(
            &kernel,
            1.0,
            &radii,
            Domain::Torus {
                length: m as f64 * h,
            },
            Some((m - 1) / 2),
        )
        .unwrap();
        let mut sup = 0.0f64;
        let mut sup_ref = 0.0f64;
        for j in 0..=m / 2 {
            sup = sup.max((out.field.values[j] - spec.values[j]).abs());
            sup_ref = sup_ref.max(spec.values[j].abs());
        }
        assert!(sup / sup_ref < 2e-3, "rel sup {}", sup / sup_ref);
    }

    #[test]
    fn stationary_refuses_light_tails() {
        let kernel = stable_kernel(1.5, 1);
        let lk = LatticeKernel::new(&kernel, 32, 1.0, Discretization::Sampled).unwrap();
        assert!(matches!(
            stationary_fixed_point(&kernel, &lk, 1.0, 2, None),
            Err(HierarchyError::LightTail(..))
        ));
    }

    #[test]
    fn decay_profile_of_constant_field_is_zero() {
        let f = LatticeField::constant(1, 32, 1.0, 2, 2.0, 4.0).unwrap();
        let rep = decay_profile(&f);
        assert_eq!(rep.near_dev, 0.0);
        assert_eq!(rep.far_dev, 0.0);
    }

    #[test]
    fn stationary_pair_field_decays() {
        let kernel = stable_kernel(0.5, 1);
        let lk = LatticeKernel::new(&kernel, 128, 1.0, Discretization::Sampled).unwrap();
        let out = stationary_fixed_point(&kernel, &lk, 1.0, 2, None).unwrap();
        let rep = decay_profile(&out.field);
        assert!(rep.far_dev < 0.1 * rep.near_dev, "{rep:?}");
    }

    #[test]
    fn refinement_changes_stationary_field_little() {
        // the transform of the alpha = 0.5 family decays like exp(-sqrt p),
        // so the h-converged regime starts around h ~ 1/8 of a scale unit
        let kernel = stable_kernel(0.5, 1);
        let coarse = LatticeKernel::new(&kernel, 128, 0.125, Discretization::Sampled).unwrap();
        let fine = LatticeKernel::new(&kernel, 256, 0.0625, Discretization::Sampled).unwrap();
        let a = stationary_fixed_point(&kernel, &coarse, 1.0, 2, None).unwrap();
        let b = stationary_fixed_point(&kernel, &fine, 1.0, 2, None).unwrap();
        let mut worst = 0.0f64;
        for j in 0..=64usize {
            let va = a.field.values[j];
            let vb = b.field.values[2 * j];
            worst = worst.max((va - vb).abs() / vb.abs());
        }
        assert!(worst < 5e-3, "refinement shift {worst}");
    }

    #[test]
    fn triple_stationary_far_corner_approaches_rho_cubed() {
        let kernel = stable_kernel(0.5, 1);
        let lk = LatticeKernel::new(&kernel, 32, 2.0, Discretization::Sampled).unwrap();
        let out = stationary_fixed_point(&kernel, &lk, 1.0, 3, None).unwrap();
        let rep = decay_profile(&out.field);
        // all pairwise separations large: k3 within a modest fraction of
        // rho^3 compared with the on-diagonal excess
        assert!(
            rep.far_dev < 0.15 * rep.near_dev,
            "far {} vs near {}",
            rep.far_dev,
            rep.near_dev
        );
        // and the profile sinks monotonically past the first classes
        for w in rep.classes.windows(2).skip(1) {
            assert!(w[1].1 <= w[0].1 * 1.2, "profile bump: {:?}", rep.classes);
        }
    }

    #[test]
    fn oversized_time_steps_are_rejected() {
        let kernel = stable_kernel(0.5, 1);
        let lk = LatticeKernel::new(&kernel, 16, 1.0, Discretization::Sampled).unwrap();
        let f = LatticeField::constant(1, 16, 1.0, 2, 1.0, 1.0).unwrap();
        assert!(matches!(
            evolve(&f, &lk, None, 1.0, Some(0.5)),
            Err(HierarchyError::BadTimeStep { .. })
        ));
    }

    #[test]
    fn growth_bound_fit() {
        let b = fit_growth_bounds(&[1.0, 2.0, 5.0]);
        // D C = 1, 4 D C^2 = 2 => C = 0.5, D = 2; bound at n=3: 2*.125*36 = 9
        assert!((b.c - 0.5).abs() < 1e-12);
        assert!((b.d - 2.0).abs() < 1e-12);
        assert!(b.bound_ok);
        let bad = fit_growth_bounds(&[1.0, 2.0, 100.0]);
        assert!(!bad.bound_ok);
    }

    #[test]
    fn mismatched_lattices_are_rejected() {
        let k = stable_kernel(0.5, 1);
        let lk = LatticeKernel::new(&k, 32, 1.0, Discretization::Sampled).unwrap();
        let f = LatticeField::constant(1, 16, 1.0, 2, 1.0, 0.0).unwrap();
        assert!(matches!(
            apply_dual_generator(&f, &lk),
            Err(HierarchyError::LatticeMismatch(_))
        ));
    }

    #[test]
    fn two_dimensional_smoke() {
        let kernel = stable_kernel(1.5, 2);
        let lk = LatticeKernel::new(&kernel, 16, 1.0, Discretization::Sampled).unwrap();
        let total: f64 = lk.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-13);
        let f = LatticeField::constant(2, 16, 1.0, 2, 1.0, 2.0).unwrap();
        let out = apply_dual_generator(&f, &lk).unwrap();
        assert!(out.sup_norm() < 1e-12);
        let outcome = stationary_fixed_point(&kernel, &lk, 1.0, 2, None).unwrap();
        assert!(outcome.residual_sup < 1e-3 * outcome.source_sup);
        let rep = decay_profile(&outcome.field);
        assert!(rep.far_dev < rep.near_dev);
    }
}
