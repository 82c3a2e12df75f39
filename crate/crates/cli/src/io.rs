//! File formats: CSV for fields and curves (diffable goldens), JSON for
//! reports. Every artifact carries the config hash and master seed, so any
//! output can be traced to the exact experiment that produced it.

use crate::config::ExperimentConfig;
use anyhow::{bail, Context, Result};
use ccm_core::sim::{Configuration, Ensemble};
use ccm_core::spectral::SpectralField;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

/// FNV-1a: a stable non-cryptographic fingerprint of the canonical config.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn config_hash(config: &ExperimentConfig) -> String {
    format!("{:016x}", fnv1a64(config.to_toml().as_bytes()))
}

#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub master_seed: u64,
}

impl Provenance {
    pub fn of(config: &ExperimentConfig) -> Self {
        Self {
            config_hash: config_hash(config),
            master_seed: config.master_seed,
        }
    }

    fn comment_line(&self) -> String {
        format!(
            "# config_hash={} master_seed={}",
            self.config_hash, self.master_seed
        )
    }
}

#[derive(Serialize)]
struct WithProvenance<'a, T: Serialize> {
    provenance: &'a Provenance,
    #[serde(flatten)]
    body: &'a T,
}

/// Pretty JSON with the provenance envelope.
pub fn write_json<T: Serialize>(path: &Path, prov: &Provenance, body: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let file = File::create(path).with_context(|| format!("create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(
        &mut w,
        &WithProvenance {
            provenance: prov,
            body,
        },
    )?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Spectral fields as CSV `r,t,k2,u2`; stationary rows carry `t = inf`.
pub fn write_spectral_csv(path: &Path, prov: &Provenance, fields: &[&SpectralField]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", prov.comment_line())?;
    writeln!(w, "r,t,k2,u2")?;
    for f in fields {
        let t = f.time.unwrap_or(f64::INFINITY);
        let rho2 = f.rho * f.rho;
        for (r, v) in f.radii.iter().zip(f.values.iter()) {
            writeln!(w, "{r},{t},{v},{}", v - rho2)?;
        }
    }
    Ok(())
}

/// Rows of a spectral CSV keyed by time (inf = stationary).
pub type SpectralRows = BTreeMap<u64, Vec<(f64, f64)>>;

pub fn read_spectral_csv(path: &Path) -> Result<SpectralRows> {
    let mut out: SpectralRows = BTreeMap::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if line.starts_with('#') || line.starts_with('r') || line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let r: f64 = parts.next().context("r")?.parse()?;
        let t: f64 = parts.next().context("t")?.parse()?;
        let k2: f64 = parts.next().context("k2")?.parse()?;
        out.entry(t.to_bits()).or_default().push((r, k2));
    }
    Ok(out)
}

/// Clustering curve CSV `t,k2_zero`.
pub fn write_clustering_csv(path: &Path, prov: &Provenance, points: &[(f64, f64)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", prov.comment_line())?;
    writeln!(w, "t,k2_zero")?;
    for (t, v) in points {
        writeln!(w, "{t},{v}")?;
    }
    Ok(())
}

/// Snapshots as newline records `run_id,time,x1[,x2]`, one per particle.
/// The header carries the torus geometry needed to rebuild configurations.
pub fn write_snapshots(path: &Path, prov: &Provenance, ensemble: &Ensemble) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", prov.comment_line())?;
    writeln!(
        w,
        "# dimension={} torus_length={}",
        ensemble.dim, ensemble.torus_length
    )?;
    writeln!(
        w,
        "run_id,time,{}",
        if ensemble.dim == 1 { "x1" } else { "x1,x2" }
    )?;
    for (run_id, run) in ensemble.valid_runs().enumerate() {
        for snap in &run.snapshots {
            for p in snap.config.points() {
                match ensemble.dim {
                    1 => writeln!(w, "{run_id},{},{}", snap.time, p[0])?,
                    _ => writeln!(w, "{run_id},{},{},{}", snap.time, p[0], p[1])?,
                }
            }
            if snap.config.is_empty() {
                // keep extinct snapshots visible so run counts stay right
                writeln!(w, "{run_id},{},empty", snap.time)?;
            }
        }
    }
    Ok(())
}

/// Snapshot file parsed back into per-time configuration sets.
pub struct SnapshotData {
    pub dimension: usize,
    pub torus_length: f64,
    /// time bits -> run id -> flat coordinates
    pub by_time: BTreeMap<u64, BTreeMap<u64, Vec<f64>>>,
}

impl SnapshotData {
    pub fn times(&self) -> Vec<f64> {
        self.by_time.keys().map(|b| f64::from_bits(*b)).collect()
    }

    pub fn configs_at(&self, time: f64) -> Result<Vec<Configuration>> {
        let runs = self
            .by_time
            .get(&time.to_bits())
            .with_context(|| format!("no snapshot at t={time}"))?;
        runs.values()
            .map(|coords| {
                Configuration::from_points(self.dimension, self.torus_length, coords)
                    .map_err(|e| anyhow::anyhow!(e.to_string()))
            })
            .collect()
    }
}

pub fn read_snapshots(path: &Path) -> Result<SnapshotData> {
    let mut dimension = 0usize;
    let mut torus_length = 0.0f64;
    let mut by_time: BTreeMap<u64, BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if let Some(rest) = line.strip_prefix("# dimension=") {
            let mut it = rest.split_whitespace();
            dimension = it.next().context("dimension")?.parse()?;
            let tl = it
                .next()
                .and_then(|s| s.strip_prefix("torus_length="))
                .context("torus_length")?;
            torus_length = tl.parse()?;
            continue;
        }
        if line.starts_with('#') || line.starts_with("run_id") || line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let run: u64 = parts.next().context("run_id")?.parse()?;
        let time: f64 = parts.next().context("time")?.parse()?;
        let slot = by_time
            .entry(time.to_bits())
            .or_default()
            .entry(run)
            .or_default();
        let first = parts.next().context("coordinate")?;
        if first == "empty" {
            continue; // run present at this time with zero particles
        }
        slot.push(first.parse()?);
        for c in parts {
            slot.push(c.parse()?);
        }
    }
    if dimension == 0 {
        bail!("snapshot file lacks the geometry header");
    }
    Ok(SnapshotData {
        dimension,
        torus_length,
        by_time,
    })
}

/// Population traces CSV `run_id,t,n`.
pub fn write_traces_csv(path: &Path, prov: &Provenance, ensemble: &Ensemble) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", prov.comment_line())?;
    writeln!(w, "run_id,t,n")?;
    for (run_id, run) in ensemble.runs.iter().enumerate() {
        for (t, n) in &run.population_trace {
            writeln!(w, "{run_id},{t},{n}")?;
        }
    }
    Ok(())
}

/// Estimates CSV `t,r,k2_hat,se`.
pub fn write_estimates_csv(
    path: &Path,
    prov: &Provenance,
    rows: &[(f64, f64, f64, f64)],
) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", prov.comment_line())?;
    writeln!(w, "t,r,k2_hat,se")?;
    for (t, r, k2, se) in rows {
        writeln!(w, "{t},{r},{k2},{se}")?;
    }
    Ok(())
}

/// Rows of an estimates CSV keyed by time.
pub type EstimateRows = BTreeMap<u64, Vec<(f64, f64, f64)>>;

pub fn read_estimates_csv(path: &Path) -> Result<EstimateRows> {
    let mut out: EstimateRows = BTreeMap::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if line.starts_with('#') || line.starts_with('t') || line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let t: f64 = parts.next().context("t")?.parse()?;
        let r: f64 = parts.next().context("r")?.parse()?;
        let k2: f64 = parts.next().context("k2_hat")?.parse()?;
        let se: f64 = parts.next().context("se")?.parse()?;
        out.entry(t.to_bits()).or_default().push((r, k2, se));
    }
    Ok(out)
}
