use anyhow::{bail, Context, Result};
use ccm_cli::config::{preset, preset_names, ExperimentConfig};
use ccm_cli::io::{self, Provenance};
use ccm_cli::pipeline::{
    output_dir, run_pipeline, stage_hierarchy, stage_simulate, stage_spectral,
};
use ccm_cli::report::ComparisonReport;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Critical contact model workbench: spectral solver, lattice hierarchy,
/// exact simulator and estimators behind one experiment config.
#[derive(Parser)]
#[command(name = "ccm", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Path to an experiment config (TOML).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Bundled preset name (see `ccm presets`).
    #[arg(long)]
    preset: Option<String>,
    /// Output root; the config's output_dir is created beneath it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long)]
    master_seed: Option<u64>,
    /// Override the ensemble size.
    #[arg(long)]
    runs: Option<usize>,
    /// Override the intensity.
    #[arg(long)]
    rho: Option<f64>,
    /// Override the stable tail exponent of the dispersal kernel.
    #[arg(long)]
    alpha: Option<f64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), None) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("read {}", path.display()))?;
                ExperimentConfig::from_toml(&text).map_err(|e| anyhow::anyhow!(e.to_string()))?
            }
            (None, Some(name)) => preset(name)
                .with_context(|| format!("unknown preset {name}; try: {:?}", preset_names()))?,
            _ => bail!("exactly one of --config or --preset is required"),
        };
        if let Some(seed) = self.master_seed {
            cfg.master_seed = seed;
        }
        if let Some(runs) = self.runs {
            cfg.simulation.runs = runs;
        }
        if let Some(rho) = self.rho {
            cfg.rho = rho;
        }
        if let Some(alpha) = self.alpha {
            cfg.kernel.alpha = Some(alpha);
        }
        cfg.validate().map_err(|e| anyhow::anyhow!(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check the kernel conditions and write the validation report.
    Validate(ConfigArgs),
    /// Closed-form pair correlations, integrability diagnostic, clustering
    /// curve.
    Spectral(ConfigArgs),
    /// Lattice hierarchy: evolution, stationary fields, growth bounds.
    Hierarchy(ConfigArgs),
    /// Run the simulation ensemble and write snapshots plus traces.
    Simulate(ConfigArgs),
    /// Estimate pair correlations (and density stats) from a snapshot file.
    Estimate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Snapshot file (defaults to snapshots.csv in the output dir).
        #[arg(long)]
        snapshots: Option<PathBuf>,
    },
    /// Compare a spectral CSV against an estimate CSV bin by bin.
    Compare {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        spectral: PathBuf,
        #[arg(long)]
        estimates: PathBuf,
        /// z threshold per bin.
        #[arg(long, default_value_t = 3.0)]
        z_max: f64,
        /// Minimum fraction of bins inside the band.
        #[arg(long, default_value_t = 0.95)]
        min_fraction: f64,
    },
    /// Full pipeline: validate, spectral, hierarchy, simulate, estimate,
    /// compare; exit code 1 when a mandatory check fails.
    Pipeline(ConfigArgs),
    /// List bundled presets.
    Presets,
    /// Print a preset or config (after overrides) as TOML.
    PrintConfig(ConfigArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Presets => {
            for name in preset_names() {
                println!("{name}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::PrintConfig(args) => {
            let cfg = args.load()?;
            print!("{}", cfg.to_toml());
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate(args) => {
            let cfg = args.load()?;
            let dir = output_dir(&cfg, args.out.as_deref());
            std::fs::create_dir_all(&dir)?;
            let prov = Provenance::of(&cfg);
            let kernel = cfg
                .build_kernel()
                .map_err(|e| anyhow::anyhow!(e.to_string()))?;
            let report = kernel.validate();
            io::write_json(&dir.join("validation.json"), &prov, &report)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            let ok = report.normalization_ok && report.hat_bound_ok;
            Ok(if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Spectral(args) => {
            let cfg = args.load()?;
            let dir = output_dir(&cfg, args.out.as_deref());
            std::fs::create_dir_all(&dir)?;
            let prov = Provenance::of(&cfg);
            let out = stage_spectral(&cfg)?;
            io::write_json(&dir.join("integrability.json"), &prov, &out.integrability)?;
            let mut fields: Vec<&ccm_core::spectral::SpectralField> =
                out.time_fields.iter().collect();
            if let Some(st) = &out.stationary {
                fields.push(st);
            }
            io::write_spectral_csv(&dir.join("spectral.csv"), &prov, &fields)?;
            io::write_clustering_csv(&dir.join("clustering.csv"), &prov, &out.clustering.points)?;
            println!(
                "integrability: finite={} value={:?}; wrote {}",
                out.integrability.finite,
                out.integrability.value,
                dir.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Hierarchy(args) => {
            let cfg = args.load()?;
            let dir = output_dir(&cfg, args.out.as_deref());
            std::fs::create_dir_all(&dir)?;
            let prov = Provenance::of(&cfg);
            let out = stage_hierarchy(&cfg)?;
            io::write_json(&dir.join("hierarchy_report.json"), &prov, &out.report)?;
            println!("{}", serde_json::to_string_pretty(&out.report)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate(args) => {
            let cfg = args.load()?;
            let dir = output_dir(&cfg, args.out.as_deref());
            std::fs::create_dir_all(&dir)?;
            let prov = Provenance::of(&cfg);
            let ensemble = stage_simulate(&cfg)?;
            io::write_snapshots(&dir.join("snapshots.csv"), &prov, &ensemble)?;
            io::write_traces_csv(&dir.join("traces.csv"), &prov, &ensemble)?;
            println!(
                "{} runs ({} truncated), snapshots -> {}",
                ensemble.runs.len(),
                ensemble.truncated_runs,
                dir.join("snapshots.csv").display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Estimate { config, snapshots } => {
            let cfg = config.load()?;
            let dir = output_dir(&cfg, config.out.as_deref());
            std::fs::create_dir_all(&dir)?;
            let prov = Provenance::of(&cfg);
            let snap_path = snapshots.unwrap_or_else(|| dir.join("snapshots.csv"));
            let data = io::read_snapshots(&snap_path)?;
            let grid = ccm_core::estimator::BinGrid::uniform(
                data.dimension,
                data.torus_length,
                cfg.spectral.bins,
            );
            let centers = grid.centers();
            let mut rows = Vec::new();
            for &t in &data.times() {
                let configs = data.configs_at(t)?;
                let refs: Vec<&ccm_core::sim::Configuration> = configs.iter().collect();
                let hist = ccm_core::estimator::estimate_pair_correlation(&refs, &grid)
                    .map_err(|e| anyhow::anyhow!(e.to_string()))?;
                for (b, &r) in centers.iter().enumerate() {
                    rows.push((t, r, hist.k2[b], hist.se[b]));
                }
            }
            io::write_estimates_csv(&dir.join("estimate.csv"), &prov, &rows)?;
            // density fluctuations at the latest snapshot, nested windows
            if let Some(&t_last) = data.times().last() {
                let configs = data.configs_at(t_last)?;
                let refs: Vec<&ccm_core::sim::Configuration> = configs.iter().collect();
                let l = data.torus_length;
                let windows = [l / 16.0, l / 8.0, l / 4.0, l / 2.0];
                let stats = ccm_core::estimator::lln_check(&refs, &windows, None)
                    .map_err(|e| anyhow::anyhow!(e.to_string()))?;
                io::write_json(&dir.join("density_stats.json"), &prov, &stats)?;
            }
            println!("wrote {}", dir.join("estimate.csv").display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare {
            config,
            spectral,
            estimates,
            z_max,
            min_fraction,
        } => {
            let cfg = config.load()?;
            let dir = output_dir(&cfg, config.out.as_deref());
            std::fs::create_dir_all(&dir)?;
            let prov = Provenance::of(&cfg);
            let spec_rows = io::read_spectral_csv(&spectral)?;
            let est_rows = io::read_estimates_csv(&estimates)?;
            let mut checks = Vec::new();
            for (tbits, est) in &est_rows {
                let t = f64::from_bits(*tbits);
                let Some(spec) = spec_rows.get(tbits) else {
                    bail!("mismatched grids: no spectral rows at t={t}");
                };
                if spec.len() != est.len() {
                    bail!(
                        "mismatched grids at t={t}: {} spectral vs {} estimate rows",
                        spec.len(),
                        est.len()
                    );
                }
                let mut within = 0usize;
                for ((rs, k2s), (re, k2e, se)) in spec.iter().zip(est.iter()) {
                    if (rs - re).abs() > 1e-9 {
                        bail!("mismatched grids at t={t}: r {rs} vs {re}");
                    }
                    let z = if *se > 0.0 {
                        (k2e - k2s) / se
                    } else if k2e == k2s {
                        0.0
                    } else {
                        f64::INFINITY
                    };
                    if z.abs() <= z_max {
                        within += 1;
                    }
                }
                let frac = within as f64 / est.len() as f64;
                checks.push(ccm_cli::report::CheckResult::new(
                    format!("bins_within_{z_max}se[t={t}]"),
                    1.0,
                    frac,
                    1.0 - min_fraction,
                ));
            }
            // when the spectral file carries stationary rows (t = inf),
            // also test the drift-adjusted approach to stationarity
            if let Some(stat) = spec_rows.get(&f64::INFINITY.to_bits()) {
                let drift = ccm_core::spectral::torus_zero_mode_rate(
                    cfg.rho,
                    cfg.dimension,
                    cfg.torus_length,
                );
                let mut trend = Vec::new();
                for (tbits, est) in &est_rows {
                    let t = f64::from_bits(*tbits);
                    if !t.is_finite() || est.len() != stat.len() {
                        continue;
                    }
                    let mut sup = 0.0f64;
                    let mut se_at_sup = 0.0f64;
                    for ((_, k2s), (_, k2e, se)) in stat.iter().zip(est.iter()) {
                        let dev = (k2e - drift * t - k2s).abs();
                        if dev > sup {
                            sup = dev;
                            se_at_sup = *se;
                        }
                    }
                    trend.push((t, sup, se_at_sup));
                }
                let mut ok = trend.len() >= 2;
                for w in trend.windows(2) {
                    let combined = (w[0].2 * w[0].2 + w[1].2 * w[1].2).sqrt();
                    if w[1].1 + combined >= w[0].1 {
                        ok = false;
                    }
                }
                checks.push(ccm_cli::report::CheckResult::from_flag(
                    "sup_deviation_trend",
                    ok,
                    format!(
                        "detrended sup deviations {:?}",
                        trend.iter().map(|p| (p.0, p.1)).collect::<Vec<_>>()
                    ),
                ));
            }
            let report = ComparisonReport::from_checks(checks);
            io::write_json(&dir.join("compare.json"), &prov, &report)?;
            print!("{}", report.table());
            Ok(if report.verdict {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Pipeline(args) => {
            let cfg = args.load()?;
            let outcome = run_pipeline(&cfg, args.out.as_deref())?;
            print!("{}", outcome.report.table());
            println!("artifacts in {}", outcome.dir.display());
            Ok(if outcome.report.verdict {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
    }
}
