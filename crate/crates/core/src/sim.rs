//! Exact event-driven simulation of the contact process on a periodic
//! torus.
//!
//! The population is a finite point set; every particle carries a death
//! rate, a birth rate (offspring displaced by the dispersal kernel, wrapped
//! around the torus) and optionally a relocation rate. Waiting times are
//! exponential at the total rate, the event kind is chosen by rate
//! proportion, the affected particle uniformly — the classic direct-method
//! jump-chain simulation, kept exact because the distributional acceptance
//! tests need event statistics, not trajectories of a discretized model.
//!
//! Ensembles derive one rng stream per run from a master seed, so any
//! subset of runs can be reproduced independently and in parallel.

use crate::geometry::wrap;
use crate::kernel::{DispersalKernel, JumpKernel};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("step on an empty configuration (extinction is absorbing)")]
    EmptyConfiguration,
    #[error("rates must be non-negative and finite, got birth {birth}, death {death}")]
    BadRates { birth: f64, death: f64 },
    #[error("torus length must be positive and finite, got {0}")]
    BadLength(f64),
    #[error("dimension mismatch: kernel is d={kernel}, configuration d={config}")]
    DimensionMismatch { kernel: usize, config: usize },
    #[error("snapshot times must be sorted, non-negative and within the horizon")]
    BadSnapshots,
}

/// Finite particle configuration on the torus `[0, L)^d`, coordinates
/// stored flat with stride `dim`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub dim: usize,
    pub length: f64,
    coords: Vec<f64>,
}

impl Configuration {
    pub fn new(dim: usize, length: f64) -> Result<Self, SimError> {
        if !(length.is_finite() && length > 0.0) {
            return Err(SimError::BadLength(length));
        }
        Ok(Self {
            dim,
            length,
            coords: Vec::new(),
        })
    }

    pub fn from_points(dim: usize, length: f64, points: &[f64]) -> Result<Self, SimError> {
        let mut c = Self::new(dim, length)?;
        assert_eq!(points.len() % dim, 0);
        c.coords = points.iter().map(|&x| wrap(x, length)).collect();
        Ok(c)
    }

    /// Poisson point process with intensity `rho`: particle count is
    /// Poisson with mean `rho L^d`, positions independent uniform.
    pub fn poisson<R: Rng + ?Sized>(
        dim: usize,
        length: f64,
        rho: f64,
        rng: &mut R,
    ) -> Result<Self, SimError> {
        let mut c = Self::new(dim, length)?;
        if rho > 0.0 {
            let mean = rho * length.powi(dim as i32);
            let n = Poisson::new(mean).expect("positive mean").sample(rng) as usize;
            c.coords.reserve(n * dim);
            for _ in 0..n * dim {
                c.coords.push(rng.random::<f64>() * length);
            }
        }
        Ok(c)
    }

    pub fn n_points(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    fn push(&mut self, p: &[f64]) {
        self.coords.extend_from_slice(p);
    }

    fn swap_remove(&mut self, i: usize) {
        let d = self.dim;
        let n = self.n_points();
        for a in 0..d {
            self.coords.swap(i * d + a, (n - 1) * d + a);
        }
        self.coords.truncate((n - 1) * d);
    }
}

/// Model and run parameters.
#[derive(Clone, Debug)]
pub struct SimParams {
    pub lambda_b: f64,
    pub lambda_d: f64,
    pub kernel: DispersalKernel,
    pub jump: Option<JumpKernel>,
    pub horizon: f64,
    pub snapshot_times: Vec<f64>,
    /// Population guard: a run that reaches this size is cut and flagged.
    pub n_max: usize,
    /// Record the population after every event (otherwise snapshots only).
    pub record_events: bool,
}

impl SimParams {
    pub fn critical(kernel: DispersalKernel, horizon: f64, snapshot_times: Vec<f64>) -> Self {
        Self {
            lambda_b: 1.0,
            lambda_d: 1.0,
            kernel,
            jump: None,
            horizon,
            snapshot_times,
            n_max: 1_000_000,
            record_events: false,
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        if !(self.lambda_b >= 0.0 && self.lambda_d >= 0.0)
            || !self.lambda_b.is_finite()
            || !self.lambda_d.is_finite()
        {
            return Err(SimError::BadRates {
                birth: self.lambda_b,
                death: self.lambda_d,
            });
        }
        let mut prev = 0.0;
        for &t in &self.snapshot_times {
            if !(t >= prev && t <= self.horizon && t.is_finite()) {
                return Err(SimError::BadSnapshots);
            }
            prev = t;
        }
        Ok(())
    }

    fn total_rate_per_particle(&self) -> f64 {
        self.lambda_b + self.lambda_d + self.jump.as_ref().map_or(0.0, |j| j.rate)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    Birth,
    Death,
    Jump,
}

/// One exact event: draws the exponential waiting time at the current
/// total rate and applies a birth, death or relocation in place.
pub fn step<R: Rng + ?Sized>(
    config: &mut Configuration,
    params: &SimParams,
    rng: &mut R,
) -> Result<(f64, EventKind), SimError> {
    let n = config.n_points();
    if n == 0 {
        return Err(SimError::EmptyConfiguration);
    }
    if config.dim != params.kernel.dimension() {
        return Err(SimError::DimensionMismatch {
            kernel: params.kernel.dimension(),
            config: config.dim,
        });
    }
    let total = params.total_rate_per_particle() * n as f64;
    let e: f64 = Exp1.sample(rng);
    let tau = e / total;
    let kind = apply_event(config, params, rng);
    Ok((tau, kind))
}

/// Select and apply one event; the waiting time has already been drawn.
fn apply_event<R: Rng + ?Sized>(
    config: &mut Configuration,
    params: &SimParams,
    rng: &mut R,
) -> EventKind {
    let n = config.n_points();
    let per = params.total_rate_per_particle();
    let u = rng.random::<f64>() * per;
    if u < params.lambda_d {
        let victim = rng.random_range(0..n);
        config.swap_remove(victim);
        EventKind::Death
    } else if u < params.lambda_d + params.lambda_b {
        let parent = rng.random_range(0..n);
        let disp = params.kernel.sample_displacement(rng);
        let d = config.dim;
        let mut child = [0.0; 2];
        for (a, slot) in child.iter_mut().enumerate().take(d) {
            *slot = wrap(config.point(parent)[a] + disp[a], config.length);
        }
        config.push(&child[..d]);
        EventKind::Birth
    } else {
        let mover = rng.random_range(0..n);
        let jump = params.jump.as_ref().expect("jump rate without kernel");
        let disp = jump.shape.sample_displacement(rng);
        let d = config.dim;
        let length = config.length;
        for (a, &delta) in disp.iter().enumerate().take(d) {
            let x = config.point(mover)[a] + delta;
            config.coords[mover * d + a] = wrap(x, length);
        }
        EventKind::Jump
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub config: Configuration,
}

/// A single seeded trajectory with its recorded snapshots.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimulationRun {
    pub seed: u64,
    pub events: u64,
    pub births: u64,
    pub deaths: u64,
    pub jumps: u64,
    pub extinction_time: Option<f64>,
    /// True when the population guard cut the run short; such runs are
    /// excluded from estimation and accounted for in the ensemble.
    pub truncated: bool,
    pub snapshots: Vec<Snapshot>,
    /// `(time, population)`: every event when `record_events`, otherwise
    /// one entry per snapshot time.
    pub population_trace: Vec<(f64, u64)>,
}

/// Simulate one trajectory to the horizon, extinction or the population
/// guard; deterministic in `(initial, params, seed)`.
pub fn run(
    initial: &Configuration,
    params: &SimParams,
    seed: u64,
) -> Result<SimulationRun, SimError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut config = initial.clone();
    let mut t = 0.0;
    let mut out = SimulationRun {
        seed,
        events: 0,
        births: 0,
        deaths: 0,
        jumps: 0,
        extinction_time: None,
        truncated: false,
        snapshots: Vec::with_capacity(params.snapshot_times.len()),
        population_trace: Vec::new(),
    };
    let mut next_snap = 0usize;
    if params.record_events {
        out.population_trace.push((0.0, config.n_points() as u64));
    }
    loop {
        if config.is_empty() {
            out.extinction_time = Some(t);
            break;
        }
        let n = config.n_points();
        let total = params.total_rate_per_particle() * n as f64;
        let tau = if total > 0.0 {
            let e: f64 = Exp1.sample(&mut rng);
            e / total
        } else {
            f64::INFINITY
        };
        let t_event = t + tau;
        while next_snap < params.snapshot_times.len() && params.snapshot_times[next_snap] < t_event
        {
            let st = params.snapshot_times[next_snap];
            if st >= t {
                out.snapshots.push(Snapshot {
                    time: st,
                    config: config.clone(),
                });
                if !params.record_events {
                    out.population_trace.push((st, config.n_points() as u64));
                }
            }
            next_snap += 1;
        }
        if t_event > params.horizon {
            break;
        }
        t = t_event;
        let kind = apply_event(&mut config, params, &mut rng);
        out.events += 1;
        match kind {
            EventKind::Birth => out.births += 1,
            EventKind::Death => out.deaths += 1,
            EventKind::Jump => out.jumps += 1,
        }
        if params.record_events {
            out.population_trace.push((t, config.n_points() as u64));
        }
        if config.n_points() >= params.n_max {
            out.truncated = true;
            break;
        }
    }
    // snapshots at or after the stopping time (extinct tail or horizon)
    while next_snap < params.snapshot_times.len() {
        let st = params.snapshot_times[next_snap];
        if !out.truncated {
            out.snapshots.push(Snapshot {
                time: st,
                config: config.clone(),
            });
            if !params.record_events {
                out.population_trace.push((st, config.n_points() as u64));
            }
        }
        next_snap += 1;
    }
    Ok(out)
}

/// Independent runs from Poisson initial data, seeds derived per run.
#[derive(Clone, Debug)]
pub struct Ensemble {
    pub runs: Vec<SimulationRun>,
    pub master_seed: u64,
    pub rho: f64,
    pub torus_length: f64,
    pub dim: usize,
    pub truncated_runs: usize,
}

impl Ensemble {
    /// Runs usable for estimation (population guard never fired).
    pub fn valid_runs(&self) -> impl Iterator<Item = &SimulationRun> {
        self.runs.iter().filter(|r| !r.truncated)
    }

    /// Snapshot configurations of all valid runs at the given time.
    pub fn configs_at(&self, time: f64) -> Vec<&Configuration> {
        self.valid_runs()
            .flat_map(|r| {
                r.snapshots
                    .iter()
                    .filter(move |s| (s.time - time).abs() < 1e-9)
                    .map(|s| &s.config)
            })
            .collect()
    }

    /// Population of each valid run at the given snapshot time.
    pub fn populations_at(&self, time: f64) -> Vec<f64> {
        self.configs_at(time)
            .iter()
            .map(|c| c.n_points() as f64)
            .collect()
    }
}

/// SplitMix64 finalizer; decorrelates per-run seeds from the run index.
fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Run `count` independent trajectories from Poisson(rho) initial data on
/// the torus; bitwise deterministic in the master seed, regardless of the
/// number of worker threads.
pub fn run_ensemble(
    dim: usize,
    torus_length: f64,
    rho: f64,
    params: &SimParams,
    master_seed: u64,
    count: usize,
) -> Result<Ensemble, SimError> {
    params.validate()?;
    if dim != params.kernel.dimension() {
        return Err(SimError::DimensionMismatch {
            kernel: params.kernel.dimension(),
            config: dim,
        });
    }
    let runs: Result<Vec<SimulationRun>, SimError> = (0..count)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(master_seed, i as u64);
            let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX));
            let initial = Configuration::poisson(dim, torus_length, rho, &mut init_rng)?;
            run(&initial, params, seed)
        })
        .collect();
    let runs = runs?;
    let truncated_runs = runs.iter().filter(|r| r.truncated).count();
    Ok(Ensemble {
        runs,
        master_seed,
        rho,
        torus_length,
        dim,
        truncated_runs,
    })
}
