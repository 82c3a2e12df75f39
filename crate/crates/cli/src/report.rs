//! Comparison reports: named checks with predicted/observed values and a
//! single machine-readable verdict.

use ccm_core::estimator::{ConvergencePoint, PairHistogram};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CompareError {
    #[error("mismatched grids: {0}")]
    GridMismatch(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub predicted: f64,
    pub observed: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Informational checks that are expected to fail for this experiment
    /// (for instance stationary convergence under a clustering kernel); an
    /// expected failure does not block the verdict.
    pub expected_fail: bool,
    pub note: String,
}

impl CheckResult {
    pub fn new(name: impl Into<String>, predicted: f64, observed: f64, tolerance: f64) -> Self {
        let pass = (observed - predicted).abs() <= tolerance;
        Self {
            name: name.into(),
            predicted,
            observed,
            tolerance,
            pass,
            expected_fail: false,
            note: String::new(),
        }
    }

    pub fn from_flag(name: impl Into<String>, pass: bool, note: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            predicted: 1.0,
            observed: if pass { 1.0 } else { 0.0 },
            tolerance: 0.0,
            pass,
            expected_fail: false,
            note: note.into(),
        }
    }

    pub fn expected_fail(mut self) -> Self {
        self.expected_fail = true;
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub checks: Vec<CheckResult>,
    /// True iff every mandatory check passed.
    pub verdict: bool,
}

impl ComparisonReport {
    pub fn from_checks(checks: Vec<CheckResult>) -> Self {
        let verdict = checks.iter().all(|c| c.pass || c.expected_fail);
        Self { checks, verdict }
    }

    /// Fixed-width human-readable table.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<44} {:>12} {:>12} {:>10}  status",
            "check", "predicted", "observed", "tolerance"
        );
        for c in &self.checks {
            let status = match (c.pass, c.expected_fail) {
                (true, false) => "pass",
                (true, true) => "pass (unexpected)",
                (false, true) => "fail (expected)",
                (false, false) => "FAIL",
            };
            let _ = writeln!(
                s,
                "{:<44} {:>12.5} {:>12.5} {:>10.4}  {}{}",
                c.name,
                c.predicted,
                c.observed,
                c.tolerance,
                status,
                if c.note.is_empty() {
                    String::new()
                } else {
                    format!("  [{}]", c.note)
                }
            );
        }
        let _ = writeln!(s, "verdict: {}", if self.verdict { "pass" } else { "FAIL" });
        s
    }
}

/// Per-bin z-test of an estimated histogram against a reference evaluated
/// on the same bins: passes when at least `min_fraction` of the bins sit
/// within `z_max` standard errors.
pub fn bins_within_z(
    name: impl Into<String>,
    hist: &PairHistogram,
    reference: &[f64],
    z_max: f64,
    min_fraction: f64,
) -> Result<CheckResult, CompareError> {
    if hist.k2.len() != reference.len() {
        return Err(CompareError::GridMismatch(format!(
            "{} bins vs {} reference values",
            hist.k2.len(),
            reference.len()
        )));
    }
    let mut within = 0usize;
    let mut worst_z: f64 = 0.0;
    for (b, (&obs, &pred)) in hist.k2.iter().zip(reference.iter()).enumerate() {
        let se = hist.se[b];
        let z = if se > 0.0 {
            (obs - pred) / se
        } else if obs == pred {
            0.0
        } else {
            f64::INFINITY
        };
        worst_z = worst_z.max(z.abs());
        if z.abs() <= z_max {
            within += 1;
        }
    }
    let frac = within as f64 / hist.k2.len() as f64;
    let mut check = CheckResult::new(name, 1.0, frac, 1.0 - min_fraction);
    check.note = format!("worst |z| = {worst_z:.2}");
    Ok(check)
}

/// Sup-norm agreement of two fields on a common grid, relative to the
/// reference sup.
pub fn fields_match(
    name: impl Into<String>,
    reference: &[f64],
    observed: &[f64],
    rel_tolerance: f64,
) -> Result<CheckResult, CompareError> {
    if reference.len() != observed.len() {
        return Err(CompareError::GridMismatch(format!(
            "{} vs {} values",
            reference.len(),
            observed.len()
        )));
    }
    let sup_ref = reference.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let sup_diff = reference
        .iter()
        .zip(observed.iter())
        .fold(0.0f64, |a, (r, o)| a.max((r - o).abs()));
    let rel = if sup_ref > 0.0 {
        sup_diff / sup_ref
    } else {
        sup_diff
    };
    Ok(CheckResult::new(name, 0.0, rel, rel_tolerance))
}

/// Strict decrease of the detrended sup deviation across snapshot times,
/// beyond the combined bootstrap standard errors.
pub fn convergence_trend(name: impl Into<String>, points: &[ConvergencePoint]) -> CheckResult {
    let mut ok = points.len() >= 2;
    let mut min_margin = f64::INFINITY;
    for w in points.windows(2) {
        let combined_se = (w[0].se * w[0].se + w[1].se * w[1].se).sqrt();
        let margin = w[0].deviation_detrended - w[1].deviation_detrended - combined_se;
        min_margin = min_margin.min(margin);
        if margin <= 0.0 {
            ok = false;
        }
    }
    CheckResult::from_flag(name, ok, format!("min margin {min_margin:.4}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hist_with(values: Vec<f64>, se: Vec<f64>) -> PairHistogram {
        use ccm_core::estimator::BinGrid;
        PairHistogram {
            grid: BinGrid::uniform(1, 10.0, values.len()),
            n_runs: 10,
            per_run: vec![values.clone(); 2],
            k2: values,
            se,
            mean_pairs: 0.0,
            rho_hat: 1.0,
        }
    }

    #[test]
    fn identical_inputs_pass_with_zero_deviation() {
        let vals = vec![1.0, 2.0, 3.0];
        let check = fields_match("x", &vals, &vals, 1e-12).unwrap();
        assert!(check.pass);
        assert_eq!(check.observed, 0.0);
    }

    #[test]
    fn constant_shift_shows_as_sup_deviation() {
        let a = vec![1.0, 2.0, 3.0];
        let b = vec![1.5, 2.5, 3.5];
        let check = fields_match("x", &a, &b, 1e-3).unwrap();
        assert!(!check.pass);
        assert!((check.observed - 0.5 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let a = vec![1.0, 2.0];
        let b = vec![1.0];
        assert!(fields_match("x", &a, &b, 0.1).is_err());
        let h = hist_with(vec![1.0, 1.0], vec![0.1, 0.1]);
        assert!(bins_within_z("x", &h, &[1.0], 3.0, 0.95).is_err());
    }

    #[test]
    fn z_fraction_counts_outliers() {
        let h = hist_with(vec![1.0, 1.0, 1.0, 9.0], vec![0.1; 4]);
        let check = bins_within_z("x", &h, &[1.0; 4], 3.0, 0.95).unwrap();
        assert!(!check.pass);
        assert!((check.observed - 0.75).abs() < 1e-12);
        let good = bins_within_z("x", &h, &[1.0, 1.0, 1.0, 9.0], 3.0, 0.95).unwrap();
        assert!(good.pass);
    }

    #[test]
    fn verdict_ignores_expected_failures() {
        let checks = vec![
            CheckResult::from_flag("a", true, ""),
            CheckResult::from_flag("b", false, "").expected_fail(),
        ];
        let report = ComparisonReport::from_checks(checks);
        assert!(report.verdict);
        let hard_fail = ComparisonReport::from_checks(vec![CheckResult::from_flag("c", false, "")]);
        assert!(!hard_fail.verdict);
        assert!(hard_fail.table().contains("FAIL"));
    }
}
