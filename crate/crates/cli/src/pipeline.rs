//! Experiment orchestration: validate -> spectral -> simulate -> estimate
//! -> compare, with every intermediate artifact written to the output
//! directory. Deterministic given the config and master seed.

use crate::config::ExperimentConfig;
use crate::io::{self, Provenance};
use crate::report::{bins_within_z, convergence_trend, CheckResult, ComparisonReport};
use anyhow::{Context, Result};
use ccm_core::estimator::{
    convergence_curve, estimate_pair_correlation, lln_check, BinGrid, DensityStats, PairHistogram,
};
use ccm_core::hierarchy::{self, Discretization, LatticeField, LatticeKernel, StationaryOutcome};
use ccm_core::kernel::JumpKernel;
use ccm_core::kernel::{DispersalKernel, ValidationReport};
use ccm_core::sim::{run_ensemble, Ensemble, SimParams};
use ccm_core::spectral::{
    clustering_growth_curve, integrability_diagnostic, pair_correlation_at_time_capped,
    pair_correlation_at_time_with_jumps, stationary_pair_correlation_with_jumps,
    torus_zero_mode_rate, ClusterClass, ClusteringCurve, Domain, IntegrabilityReport,
    SpectralField,
};
use serde::Serialize;
use std::path::{Path, PathBuf};

/// Fraction of histogram bins required inside the 3-sigma band.
const BIN_FRACTION: f64 = 0.95;
/// Relative sup-norm tolerance for lattice vs closed form.
const LATTICE_TOL: f64 = 1e-2;

pub struct SpectralOutputs {
    pub integrability: IntegrabilityReport,
    /// Torus-exact `k_t` on the bin centers, one per snapshot time.
    pub time_fields: Vec<SpectralField>,
    /// Bin-averaged torus `k_t` (matches what a histogram estimates).
    pub time_bin_avg: Vec<(f64, Vec<f64>)>,
    /// Stationary field on the simulation torus (zero mode projected),
    /// absent for divergent kernels.
    pub stationary: Option<SpectralField>,
    pub stationary_bin_avg: Option<Vec<f64>>,
    pub clustering: ClusteringCurve,
}

/// Evaluate a spectral field averaged over each bin the way a histogram
/// sees it (uniform in distance on the line, distance-weighted in the
/// plane). Four Gauss nodes per bin.
fn bin_average(
    kernel: &DispersalKernel,
    jump: Option<&JumpKernel>,
    rho: f64,
    time: Option<f64>,
    grid: &BinGrid,
    domain: Domain,
) -> Result<Vec<f64>> {
    let half = [
        -0.861_136_311_594_052_6,
        -0.339_981_043_584_856_26,
        0.339_981_043_584_856_26,
        0.861_136_311_594_052_6,
    ];
    let gl_w = [
        0.347_854_845_137_453_85,
        0.652_145_154_862_546_2,
        0.652_145_154_862_546_2,
        0.347_854_845_137_453_85,
    ];
    let mut radii = Vec::with_capacity(grid.n_bins() * 4);
    for b in 0..grid.n_bins() {
        let (lo, hi) = (grid.edges[b], grid.edges[b + 1]);
        for &x in &half {
            radii.push(0.5 * (lo + hi) + 0.5 * (hi - lo) * x);
        }
    }
    let field = match time {
        Some(t) => pair_correlation_at_time_with_jumps(kernel, jump, rho, t, &radii, domain, None)
            .map_err(|e| anyhow::anyhow!(e.to_string()))?,
        None => stationary_pair_correlation_with_jumps(kernel, jump, rho, &radii, domain, None)
            .map_err(|e| anyhow::anyhow!(e.to_string()))?,
    };
    let mut out = Vec::with_capacity(grid.n_bins());
    for b in 0..grid.n_bins() {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..4 {
            let r = radii[b * 4 + i];
            let v = field.values[b * 4 + i];
            let w = gl_w[i] * if grid.dim == 2 { r } else { 1.0 };
            num += w * v;
            den += w;
        }
        out.push(num / den);
    }
    Ok(out)
}

pub fn stage_spectral(config: &ExperimentConfig) -> Result<SpectralOutputs> {
    let kernel = config.build_kernel()?;
    let jump = config.build_jump()?;
    let integrability = integrability_diagnostic(&kernel, jump.as_ref());
    let domain = Domain::Torus {
        length: config.torus_length,
    };
    let grid = BinGrid::uniform(config.dimension, config.torus_length, config.spectral.bins);
    let centers = grid.centers();
    let mut time_fields = Vec::new();
    let mut time_bin_avg = Vec::new();
    for &t in &config.simulation.snapshot_times {
        let f = pair_correlation_at_time_with_jumps(
            &kernel,
            jump.as_ref(),
            config.rho,
            t,
            &centers,
            domain,
            None,
        )
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
        time_fields.push(f);
        time_bin_avg.push((
            t,
            bin_average(&kernel, jump.as_ref(), config.rho, Some(t), &grid, domain)?,
        ));
    }
    let (stationary, stationary_bin_avg) = if integrability.finite && config.rho > 0.0 {
        let f = stationary_pair_correlation_with_jumps(
            &kernel,
            jump.as_ref(),
            config.rho,
            &centers,
            domain,
            None,
        )
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
        let avg = bin_average(&kernel, jump.as_ref(), config.rho, None, &grid, domain)?;
        (Some(f), Some(avg))
    } else {
        (None, None)
    };
    let clustering = clustering_growth_curve(&kernel, config.rho, &config.spectral.time_grid)
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    Ok(SpectralOutputs {
        integrability,
        time_fields,
        time_bin_avg,
        stationary,
        stationary_bin_avg,
        clustering,
    })
}

pub fn stage_simulate(config: &ExperimentConfig) -> Result<Ensemble> {
    let kernel = config.build_kernel()?;
    let jump = config.build_jump()?;
    let params = SimParams {
        lambda_b: config.simulation.lambda_b,
        lambda_d: config.simulation.lambda_d,
        kernel,
        jump,
        horizon: config.simulation.horizon,
        snapshot_times: config.simulation.snapshot_times.clone(),
        n_max: config.simulation.n_max,
        record_events: false,
    };
    run_ensemble(
        config.dimension,
        config.torus_length,
        config.rho,
        &params,
        config.master_seed,
        config.simulation.runs,
    )
    .map_err(|e| anyhow::anyhow!(e.to_string()))
}

pub struct EstimateOutputs {
    pub grid: BinGrid,
    pub hists: Vec<(f64, PairHistogram)>,
    pub lln: DensityStats,
}

pub fn stage_estimate(
    config: &ExperimentConfig,
    ensemble: &Ensemble,
    lln_field: Option<&SpectralField>,
) -> Result<EstimateOutputs> {
    let grid = BinGrid::uniform(config.dimension, config.torus_length, config.spectral.bins);
    let mut hists = Vec::new();
    for &t in &config.simulation.snapshot_times {
        let configs = ensemble.configs_at(t);
        let hist = estimate_pair_correlation(&configs, &grid)
            .map_err(|e| anyhow::anyhow!(e.to_string()))?;
        hists.push((t, hist));
    }
    let last = *config
        .simulation
        .snapshot_times
        .last()
        .context("need at least one snapshot time")?;
    let configs = ensemble.configs_at(last);
    let l = config.torus_length;
    let windows = [l / 16.0, l / 8.0, l / 4.0, l / 2.0];
    let lln = lln_check(&configs, &windows, lln_field.map(|f| (f, config.rho)))
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    Ok(EstimateOutputs { grid, hists, lln })
}

#[derive(Serialize)]
pub struct HierarchyReport {
    pub order: usize,
    pub discretization: Discretization,
    pub lattice_size: usize,
    pub spacing: f64,
    pub rel_sup_vs_closed_form: Option<f64>,
    pub stationary_residual: Option<f64>,
    pub stationary_source_sup: Option<f64>,
    pub dropped_uniform_source: Option<f64>,
    pub horizon: Option<f64>,
    pub growth: Option<hierarchy::GrowthBounds>,
    pub decay_far_over_near: Option<f64>,
}

pub struct HierarchyOutputs {
    pub evolution: LatticeField,
    pub stationary: Option<StationaryOutcome>,
    pub report: HierarchyReport,
}

/// Evolve the lattice pair field to the configured horizon, compare against
/// the closed-form series on the lattice's own mode band, and (for heavy
/// kernels) assemble the stationary fields up to the configured order.
pub fn stage_hierarchy(config: &ExperimentConfig) -> Result<HierarchyOutputs> {
    let spec = config
        .lattice
        .as_ref()
        .context("config has no [lattice] section")?;
    let kernel = config.build_kernel()?;
    let lk = LatticeKernel::new(&kernel, spec.size, spec.spacing, spec.discretization)
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let rho = config.rho;
    let m = spec.size;
    let k1 = LatticeField::constant(lk.dim, m, spec.spacing, 1, rho, rho)
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let f2 = hierarchy::source_term(&k1, &lk).map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let init = LatticeField::constant(lk.dim, m, spec.spacing, 2, rho, rho * rho)
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let evolution = hierarchy::evolve(&init, &lk, Some(&f2), spec.horizon, spec.dt)
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;

    // closed form on the same torus and mode band (d = 1 comparison only)
    let rel_sup = if lk.dim == 1 {
        let radii: Vec<f64> = (0..=m / 2).map(|j| j as f64 * spec.spacing).collect();
        let cap = match spec.discretization {
            Discretization::BandLimited => Some((m - 1) / 2),
            Discretization::Sampled => None,
        };
        let series = pair_correlation_at_time_capped(
            &kernel,
            rho,
            spec.horizon,
            &radii,
            Domain::Torus {
                length: m as f64 * spec.spacing,
            },
            cap,
        )
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
        let sup_ref = series.values.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        let mut sup = 0.0f64;
        for j in 0..=m / 2 {
            sup = sup.max((evolution.values[j] - series.values[j]).abs());
        }
        Some(sup / sup_ref)
    } else {
        None
    };

    let stationary = if kernel.heavy_tail() && spec.order >= 2 {
        Some(
            hierarchy::stationary_fixed_point(&kernel, &lk, rho, spec.order, spec.dt)
                .map_err(|e| anyhow::anyhow!(e.to_string()))?,
        )
    } else {
        None
    };
    let growth = if spec.order >= 3 {
        if let Some(out3) = &stationary {
            let out2 = hierarchy::stationary_fixed_point(&kernel, &lk, rho, 2, spec.dt)
                .map_err(|e| anyhow::anyhow!(e.to_string()))?;
            Some(hierarchy::fit_growth_bounds(&[
                rho,
                out2.field.sup_norm(),
                out3.field.sup_norm(),
            ]))
        } else {
            None
        }
    } else {
        None
    };
    let decay = stationary.as_ref().map(|s| {
        let rep = hierarchy::decay_profile(&s.field);
        rep.far_dev / rep.near_dev.max(1e-300)
    });
    let report = HierarchyReport {
        order: spec.order,
        discretization: spec.discretization,
        lattice_size: m,
        spacing: spec.spacing,
        rel_sup_vs_closed_form: rel_sup,
        stationary_residual: stationary.as_ref().map(|s| s.residual_sup),
        stationary_source_sup: stationary.as_ref().map(|s| s.source_sup),
        dropped_uniform_source: stationary.as_ref().map(|s| s.dropped_uniform_source),
        horizon: stationary.as_ref().map(|s| s.horizon),
        growth,
        decay_far_over_near: decay,
    };
    Ok(HierarchyOutputs {
        evolution,
        stationary,
        report,
    })
}

/// Assemble the comparison report from the computed stages.
pub fn stage_compare(
    config: &ExperimentConfig,
    spectral: &SpectralOutputs,
    estimates: &EstimateOutputs,
    ensemble: &Ensemble,
    lattice_rel_sup: Option<f64>,
) -> Result<ComparisonReport> {
    let kernel = config.build_kernel()?;
    let heavy = kernel.heavy_tail();
    let mut checks = Vec::new();

    // mean population at every snapshot vs the exact expectation
    let growth_rate = config.simulation.lambda_b - config.simulation.lambda_d;
    for &t in &config.simulation.snapshot_times {
        let pops = ensemble.populations_at(t);
        let (mean, var) = ccm_core::fit::mean_var(&pops);
        let se = (var / pops.len() as f64).sqrt();
        let expected = config.rho
            * config.torus_length.powi(config.dimension as i32)
            * (growth_rate * t).exp();
        checks.push(
            CheckResult::new(format!("mean_population[t={t}]"), expected, mean, 4.0 * se)
                .with_note(format!("se {se:.3}")),
        );
    }

    // per-bin z agreement with the torus-exact time fields
    for ((t, avg), (th, hist)) in spectral.time_bin_avg.iter().zip(estimates.hists.iter()) {
        debug_assert_eq!(t, th);
        checks.push(
            bins_within_z(
                format!("bins_within_3se[t={t}]"),
                hist,
                avg,
                3.0,
                BIN_FRACTION,
            )
            .map_err(|e| anyhow::anyhow!(e.to_string()))?,
        );
    }

    // approach to stationarity (the detrended sup deviation must shrink)
    if let Some(stat_avg) = &spectral.stationary_bin_avg {
        let hist_refs: Vec<(f64, &PairHistogram)> =
            estimates.hists.iter().map(|(t, h)| (*t, h)).collect();
        let drift = torus_zero_mode_rate(config.rho, config.dimension, config.torus_length);
        let points = convergence_curve(&hist_refs, stat_avg, drift, 200, config.master_seed)
            .map_err(|e| anyhow::anyhow!(e.to_string()))?;
        checks.push(convergence_trend("convergence_to_stationary", &points));
    } else {
        checks.push(
            CheckResult::from_flag(
                "convergence_to_stationary",
                false,
                "no stationary pair structure exists for this kernel",
            )
            .expected_fail(),
        );
        // the clustering signature instead: the near-origin bin must grow
        let first = estimates
            .hists
            .iter()
            .find(|(t, _)| *t > 0.0)
            .context("need a positive snapshot time")?;
        let last = estimates.hists.last().unwrap();
        let drift = torus_zero_mode_rate(config.rho, config.dimension, config.torus_length);
        let growth = (last.1.k2[0] - drift * last.0) - (first.1.k2[0] - drift * first.0);
        let se = (last.1.se[0].powi(2) + first.1.se[0].powi(2)).sqrt();
        checks.push(CheckResult::from_flag(
            "near_origin_growth",
            growth > 3.0 * se,
            format!("growth {growth:.3} vs 3se {:.3}", 3.0 * se),
        ));
    }

    // clustering classification must match the kernel tail class
    let classified_heavy = matches!(
        spectral.clustering.classification,
        ClusterClass::Converging { .. }
    );
    checks.push(CheckResult::from_flag(
        "clustering_classification",
        classified_heavy == heavy,
        format!(
            "kernel heavy_tail={heavy}, curve {}",
            match &spectral.clustering.classification {
                ClusterClass::Converging {
                    stationary_estimate,
                } => format!("converging -> {stationary_estimate:.4}"),
                ClusterClass::Diverging { growth_exponent } =>
                    format!("diverging, exponent {growth_exponent:.3}"),
            }
        ),
    ));

    // density fluctuations against the prediction from the pair field
    for w in &estimates.lln.windows {
        if let Some(pred) = w.predicted_var {
            checks.push(
                CheckResult::new(
                    format!("lln_variance[w={}]", w.side),
                    pred,
                    w.var_density,
                    3.0 * w.var_se,
                )
                .with_note(format!("se {:.2e}", w.var_se)),
            );
        }
    }
    let vars: Vec<f64> = estimates
        .lln
        .windows
        .iter()
        .map(|w| w.var_density)
        .collect();
    checks.push(CheckResult::from_flag(
        "lln_variance_decreasing",
        vars.windows(2).all(|w| w[1] < w[0]),
        format!("{vars:.3?}"),
    ));

    if let Some(rel) = lattice_rel_sup {
        checks.push(CheckResult::new(
            "lattice_vs_closed_form",
            0.0,
            rel,
            LATTICE_TOL,
        ));
    }

    Ok(ComparisonReport::from_checks(checks))
}

/// Resolve the output directory: env override, then explicit root, then
/// the config's own path.
pub fn output_dir(config: &ExperimentConfig, root: Option<&Path>) -> PathBuf {
    let base = std::env::var_os("CCM_OUTPUT_ROOT")
        .map(PathBuf::from)
        .or_else(|| root.map(Path::to_path_buf));
    match base {
        Some(b) => b.join(&config.output_dir),
        None => PathBuf::from(&config.output_dir),
    }
}

pub struct PipelineOutcome {
    pub report: ComparisonReport,
    pub dir: PathBuf,
}

/// The full experiment: every stage, every artifact, one verdict.
pub fn run_pipeline(config: &ExperimentConfig, root: Option<&Path>) -> Result<PipelineOutcome> {
    config
        .validate()
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let dir = output_dir(config, root);
    std::fs::create_dir_all(&dir)?;
    let prov = Provenance::of(config);
    std::fs::write(dir.join("config.toml"), config.to_toml())?;

    // stage: validate
    let kernel = config.build_kernel()?;
    let validation: ValidationReport = kernel.validate();
    io::write_json(&dir.join("validation.json"), &prov, &validation).context("stage validate")?;
    if let Some(jump) = config.build_jump()? {
        let jv = jump.shape.validate();
        io::write_json(&dir.join("jump_validation.json"), &prov, &jv)?;
    }

    // stage: spectral
    let spectral = stage_spectral(config).context("stage spectral")?;
    io::write_json(
        &dir.join("integrability.json"),
        &prov,
        &spectral.integrability,
    )?;
    {
        let mut fields: Vec<&SpectralField> = spectral.time_fields.iter().collect();
        if let Some(st) = &spectral.stationary {
            fields.push(st);
        }
        io::write_spectral_csv(&dir.join("spectral.csv"), &prov, &fields)?;
        io::write_clustering_csv(
            &dir.join("clustering.csv"),
            &prov,
            &spectral.clustering.points,
        )?;
    }

    // stage: hierarchy (optional)
    let lattice_rel = match &config.lattice {
        Some(_) => {
            let h = stage_hierarchy(config).context("stage hierarchy")?;
            io::write_json(&dir.join("hierarchy_report.json"), &prov, &h.report)?;
            write_lattice_csv(&dir.join("hierarchy.csv"), &prov, &h)?;
            h.report.rel_sup_vs_closed_form
        }
        None => None,
    };

    // stage: simulate
    let ensemble = stage_simulate(config).context("stage simulate")?;
    io::write_snapshots(&dir.join("snapshots.csv"), &prov, &ensemble)?;
    io::write_traces_csv(&dir.join("traces.csv"), &prov, &ensemble)?;

    // stage: estimate
    let lln_field = spectral.time_fields.last();
    let estimates = stage_estimate(config, &ensemble, lln_field).context("stage estimate")?;
    {
        let centers = estimates.grid.centers();
        let mut rows = Vec::new();
        for (t, hist) in &estimates.hists {
            for (b, &r) in centers.iter().enumerate() {
                rows.push((*t, r, hist.k2[b], hist.se[b]));
            }
        }
        io::write_estimates_csv(&dir.join("estimate.csv"), &prov, &rows)?;
        io::write_json(&dir.join("density_stats.json"), &prov, &estimates.lln)?;
    }

    // stage: compare
    let report = stage_compare(config, &spectral, &estimates, &ensemble, lattice_rel)
        .context("stage compare")?;
    io::write_json(&dir.join("report.json"), &prov, &report)?;
    std::fs::write(dir.join("report.txt"), report.table())?;
    Ok(PipelineOutcome { report, dir })
}

fn write_lattice_csv(path: &Path, prov: &Provenance, h: &HierarchyOutputs) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        w,
        "# config_hash={} master_seed={}",
        prov.config_hash, prov.master_seed
    )?;
    writeln!(w, "r,k2_evolved,k2_stationary")?;
    let f = &h.evolution;
    if f.dim == 1 {
        for j in 0..=f.m / 2 {
            let r = j as f64 * f.h;
            match &h.stationary {
                Some(s) => writeln!(w, "{r},{},{}", f.values[j], s.field.values[j])?,
                None => writeln!(w, "{r},{},", f.values[j])?,
            }
        }
    }
    Ok(())
}
