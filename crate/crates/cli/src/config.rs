//! Experiment configuration: one structured file drives every subcommand,
//! so a run is reproducible from its config and master seed alone.

use ccm_core::hierarchy::Discretization;
use ccm_core::kernel::{DispersalKernel, JumpKernel, KernelFamily};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
#[error("{field}: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

fn bad(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

impl KernelSpec {
    pub fn build(&self, dimension: usize, field: &str) -> Result<DispersalKernel, ConfigError> {
        let made = match self.family {
            KernelFamily::SymmetricStable => {
                let alpha = self.alpha.ok_or_else(|| {
                    bad(&format!("{field}.alpha"), "required for symmetric_stable")
                })?;
                DispersalKernel::symmetric_stable(alpha, dimension, self.scale)
            }
            KernelFamily::Cauchy => DispersalKernel::cauchy(dimension, self.scale),
            KernelFamily::Gaussian => DispersalKernel::gaussian(dimension, self.scale),
            KernelFamily::CompactUniform => DispersalKernel::compact_uniform(dimension, self.scale),
        };
        made.map_err(|e| bad(field, e.to_string()))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct JumpSpec {
    #[serde(flatten)]
    pub kernel: KernelSpec,
    pub rate: f64,
}

impl JumpSpec {
    pub fn build(&self, dimension: usize) -> Result<JumpKernel, ConfigError> {
        let shape = self.kernel.build(dimension, "jump")?;
        JumpKernel::new(shape, self.rate).map_err(|e| bad("jump.rate", e.to_string()))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SimulationSpec {
    #[serde(default = "one")]
    pub lambda_b: f64,
    #[serde(default = "one")]
    pub lambda_d: f64,
    pub horizon: f64,
    pub snapshot_times: Vec<f64>,
    pub runs: usize,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
}

fn default_n_max() -> usize {
    1_000_000
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SpectralSpec {
    /// Number of pair-distance bins on `[0, L/2]`.
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// Time grid for the on-diagonal clustering curve.
    #[serde(default = "default_time_grid")]
    pub time_grid: Vec<f64>,
}

fn default_bins() -> usize {
    64
}

fn default_time_grid() -> Vec<f64> {
    vec![1.0, 10.0, 100.0, 1000.0]
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct LatticeSpec {
    pub size: usize,
    pub spacing: f64,
    #[serde(default = "default_order")]
    pub order: usize,
    pub horizon: f64,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_discretization")]
    pub discretization: Discretization,
}

fn default_order() -> usize {
    2
}

fn default_discretization() -> Discretization {
    Discretization::BandLimited
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ExperimentConfig {
    pub dimension: usize,
    pub rho: f64,
    pub torus_length: f64,
    pub master_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    pub kernel: KernelSpec,
    #[serde(default)]
    pub jump: Option<JumpSpec>,
    pub simulation: SimulationSpec,
    #[serde(default = "default_spectral")]
    pub spectral: SpectralSpec,
    #[serde(default)]
    pub lattice: Option<LatticeSpec>,
}

fn default_output_dir() -> String {
    "out".to_string()
}

fn default_spectral() -> SpectralSpec {
    SpectralSpec {
        bins: default_bins(),
        time_grid: default_time_grid(),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| bad("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.dimension != 1 && self.dimension != 2 {
            return Err(bad(
                "dimension",
                format!("must be 1 or 2, got {}", self.dimension),
            ));
        }
        if !(self.rho.is_finite() && self.rho >= 0.0) {
            return Err(bad(
                "rho",
                format!("must be non-negative, got {}", self.rho),
            ));
        }
        if !(self.torus_length.is_finite() && self.torus_length > 0.0) {
            return Err(bad(
                "torus_length",
                format!("must be positive, got {}", self.torus_length),
            ));
        }
        if let Some(alpha) = self.kernel.alpha {
            if self.kernel.family == KernelFamily::SymmetricStable && !(alpha > 0.0 && alpha <= 2.0)
            {
                return Err(bad(
                    "kernel.alpha",
                    format!("must lie in (0, 2], got {alpha}"),
                ));
            }
        }
        if !(self.kernel.scale > 0.0 && self.kernel.scale.is_finite()) {
            return Err(bad(
                "kernel.scale",
                format!("must be positive, got {}", self.kernel.scale),
            ));
        }
        // constructor-level checks (covers jump kernel too)
        self.kernel.build(self.dimension, "kernel")?;
        if let Some(jump) = &self.jump {
            jump.build(self.dimension)?;
        }
        let sim = &self.simulation;
        if !(sim.lambda_b >= 0.0 && sim.lambda_d >= 0.0) {
            return Err(bad("simulation", "rates must be non-negative"));
        }
        if !(sim.horizon >= 0.0 && sim.horizon.is_finite()) {
            return Err(bad(
                "simulation.horizon",
                format!("must be finite and non-negative, got {}", sim.horizon),
            ));
        }
        let mut prev = 0.0;
        for &t in &sim.snapshot_times {
            if !(t >= prev && t <= sim.horizon) {
                return Err(bad(
                    "simulation.snapshot_times",
                    "must be sorted, non-negative and within the horizon",
                ));
            }
            prev = t;
        }
        if sim.runs < 2 {
            return Err(bad("simulation.runs", "need at least 2 runs"));
        }
        if self.spectral.bins < 2 {
            return Err(bad("spectral.bins", "need at least 2 bins"));
        }
        if self.spectral.time_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(bad("spectral.time_grid", "must be strictly increasing"));
        }
        if let Some(lat) = &self.lattice {
            if lat.size < 4 || lat.size % 2 != 0 {
                return Err(bad("lattice.size", "must be an even number >= 4"));
            }
            if !(lat.spacing > 0.0 && lat.spacing.is_finite()) {
                return Err(bad("lattice.spacing", "must be positive"));
            }
            if !(1..=3).contains(&lat.order) {
                return Err(bad("lattice.order", "must be 1, 2 or 3"));
            }
        }
        Ok(())
    }

    pub fn build_kernel(&self) -> Result<DispersalKernel, ConfigError> {
        self.kernel.build(self.dimension, "kernel")
    }

    pub fn build_jump(&self) -> Result<Option<JumpKernel>, ConfigError> {
        self.jump
            .as_ref()
            .map(|j| j.build(self.dimension))
            .transpose()
    }
}

/// Bundled presets; `ccm pipeline --preset heavy_d1` runs them end to end.
pub fn preset(name: &str) -> Option<ExperimentConfig> {
    match name {
        "heavy_d1" => Some(ExperimentConfig {
            dimension: 1,
            rho: 1.0,
            torus_length: 200.0,
            master_seed: 94090107,
            output_dir: "out/heavy_d1".into(),
            kernel: KernelSpec {
                family: KernelFamily::SymmetricStable,
                alpha: Some(0.5),
                scale: 1.0,
            },
            jump: None,
            simulation: SimulationSpec {
                lambda_b: 1.0,
                lambda_d: 1.0,
                horizon: 20.0,
                snapshot_times: vec![0.0, 2.0, 5.0, 20.0],
                runs: 8000,
                n_max: 1_000_000,
            },
            spectral: SpectralSpec {
                bins: 64,
                time_grid: vec![1.0, 10.0, 100.0, 1000.0],
            },
            lattice: Some(LatticeSpec {
                size: 512,
                spacing: 0.390625,
                order: 2,
                horizon: 5.0,
                dt: None,
                discretization: Discretization::BandLimited,
            }),
        }),
        "light_d1_gaussian" => Some(ExperimentConfig {
            dimension: 1,
            rho: 1.0,
            torus_length: 100.0,
            master_seed: 71930211,
            output_dir: "out/light_d1_gaussian".into(),
            kernel: KernelSpec {
                family: KernelFamily::Gaussian,
                alpha: None,
                scale: 1.0,
            },
            jump: None,
            simulation: SimulationSpec {
                lambda_b: 1.0,
                lambda_d: 1.0,
                horizon: 20.0,
                snapshot_times: vec![0.0, 5.0, 20.0],
                runs: 1500,
                n_max: 1_000_000,
            },
            spectral: SpectralSpec {
                bins: 64,
                time_grid: vec![10.0, 100.0, 1000.0],
            },
            lattice: None,
        }),
        _ => None,
    }
}

pub fn preset_names() -> &'static [&'static str] {
    &["heavy_d1", "light_d1_gaussian"]
}
