//! Result records and their on-disk form.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::csv;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

pub const CHECKS_HEADER: [&str; 6] = ["stage", "check", "value", "tolerance", "comparison", "pass"];
pub const SWEEP_HEADER: [&str; 8] = [
    "parameter",
    "value",
    "lambda",
    "l1_to_linear",
    "l1_to_gibbs",
    "max_residual",
    "lambda_shift",
    "status",
];
pub const PROFILES_HEADER: [&str; 6] = ["x", "rho", "potential", "extra_potential", "force", "external_force"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// Passes when `value <= tolerance`.
    AtMost,
    /// Passes when `value >= tolerance`.
    AtLeast,
    /// Passes when `value < tolerance`.
    Below,
}

/// One judged quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub stage: String,
    pub check: String,
    pub value: f64,
    pub tolerance: f64,
    pub comparison: Comparison,
    pub pass: bool,
}

impl CheckRecord {
    pub fn at_most(stage: &str, check: &str, value: f64, tolerance: f64) -> Self {
        Self {
            stage: stage.into(),
            check: check.into(),
            value,
            tolerance,
            comparison: Comparison::AtMost,
            pass: value <= tolerance,
        }
    }

    pub fn below(stage: &str, check: &str, value: f64, tolerance: f64) -> Self {
        Self {
            stage: stage.into(),
            check: check.into(),
            value,
            tolerance,
            comparison: Comparison::Below,
            pass: value < tolerance,
        }
    }

    pub fn at_least(stage: &str, check: &str, value: f64, tolerance: f64) -> Self {
        Self {
            stage: stage.into(),
            check: check.into(),
            value,
            tolerance,
            comparison: Comparison::AtLeast,
            pass: value >= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub schema_version: u32,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub crate_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicsRecord {
    pub gamma: f64,
    pub kt: f64,
    pub tau: f64,
    pub nu: f64,
    pub charge: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryRecord {
    pub lambda: f64,
    pub residual: f64,
    pub iterations: usize,
    /// `1 / (2 Var ρ)`, the Gaussian width parameter of the solution.
    pub alpha: f64,
    pub balance_max: f64,
    pub balance_x: f64,
    pub reference_alpha: Option<f64>,
    pub reference_lambda: Option<f64>,
    pub quantum_identity_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdeRecord {
    pub samples: u64,
    pub outside: u64,
    pub bin_width: f64,
    pub histogram_l1: f64,
    pub sample_mean: f64,
    pub sample_variance: f64,
    pub increment_variance: f64,
    pub increment_variance_se: f64,
    pub expected_increment_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelRecord {
    pub dt: f64,
    pub start: f64,
    pub times: Vec<f64>,
    pub ergodic_l1: Vec<f64>,
    pub monotone: bool,
    pub tail_start: f64,
    pub tail_final_l1: f64,
    pub start_independence_l1: f64,
    pub max_mass_error: f64,
    pub min_value: f64,
    pub starts_as_delta: bool,
    pub backward_residual: f64,
    /// Asymmetry of `ρ̃(x) P_t(y,x)`, with `ρ̃` the scheme's invariant density.
    pub detailed_balance: f64,
    /// L1 distance between `ρ̃` and the solved density.
    pub invariant_density_l1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceRecord {
    pub quadrature: String,
    pub positions: Vec<f64>,
    pub kernel: Vec<f64>,
    pub monte_carlo: Vec<f64>,
    pub monte_carlo_stderr: Vec<f64>,
    pub closed_form: Option<Vec<f64>>,
    pub max_sigma: f64,
    pub closed_form_relative: Option<f64>,
    pub gibbs_residual: f64,
    pub gibbs_residual_doubled_tau: Option<f64>,
    pub identity_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub lambda: Option<f64>,
    pub l1_to_linear: Option<f64>,
    pub l1_to_gibbs: Option<f64>,
    pub max_residual: Option<f64>,
    /// `|λ(kT) - λ(0)|`, kT sweeps only.
    pub lambda_shift: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub parameter: String,
    /// `λ` of the kT = 0 problem, kT sweeps only.
    pub lambda_zero: Option<f64>,
    pub rows: Vec<SweepRow>,
    /// Some points failed; the others are still reported.
    pub partial: bool,
}

/// Plot-ready profiles on the transport grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profiles {
    pub x: Vec<f64>,
    pub rho: Vec<f64>,
    pub potential: Vec<f64>,
    pub extra_potential: Vec<f64>,
    pub force: Option<Vec<f64>>,
    pub external_force: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub metadata: RunMetadata,
    pub config: ExperimentConfig,
    pub physics: PhysicsRecord,
    pub stationary: Option<StationaryRecord>,
    pub sde: Option<SdeRecord>,
    pub kernel: Option<KernelRecord>,
    pub force: Option<ForceRecord>,
    pub sweep: Option<SweepTable>,
    pub profiles: Option<Profiles>,
    pub checks: Vec<CheckRecord>,
    pub all_pass: bool,
}

impl ReportBundle {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("malformed report: {e}")))
    }
}

/// Wall-clock information kept out of `report.json` so that file stays
/// reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub started_unix: f64,
    pub finished_unix: f64,
    pub elapsed_seconds: f64,
    pub threads: usize,
}

fn cell(v: Option<f64>) -> String {
    v.map(csv::float).unwrap_or_default()
}

pub(crate) fn checks_csv(checks: &[CheckRecord]) -> String {
    csv::render(
        &CHECKS_HEADER,
        checks.iter().map(|c| {
            let cmp = match c.comparison {
                Comparison::AtMost => "at_most",
                Comparison::AtLeast => "at_least",
                Comparison::Below => "below",
            };
            vec![
                c.stage.clone(),
                c.check.clone(),
                csv::float(c.value),
                csv::float(c.tolerance),
                cmp.into(),
                c.pass.to_string(),
            ]
        }),
    )
}

pub(crate) fn sweep_csv(t: &SweepTable) -> String {
    csv::render(
        &SWEEP_HEADER,
        t.rows.iter().map(|r| {
            vec![
                t.parameter.clone(),
                csv::float(r.value),
                cell(r.lambda),
                cell(r.l1_to_linear),
                cell(r.l1_to_gibbs),
                cell(r.max_residual),
                cell(r.lambda_shift),
                if r.error.is_some() { "failed" } else { "ok" }.into(),
            ]
        }),
    )
}

pub(crate) fn profiles_csv(p: &Profiles) -> String {
    csv::render(
        &PROFILES_HEADER,
        (0..p.x.len()).map(|i| {
            vec![
                csv::float(p.x[i]),
                csv::float(p.rho[i]),
                csv::float(p.potential[i]),
                csv::float(p.extra_potential[i]),
                cell(p.force.as_ref().map(|f| f[i])),
                csv::float(p.external_force[i]),
            ]
        }),
    )
}

/// Write `report.json`, `checks.csv`, and when present `sweep.csv`,
/// `profiles.csv` and `run_info.json`. Returns the written paths.
pub fn emit_report(bundle: &ReportBundle, info: Option<&RunInfo>, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut files = vec![("report.json", bundle.to_json()), ("checks.csv", checks_csv(&bundle.checks))];
    if let Some(t) = &bundle.sweep {
        files.push(("sweep.csv", sweep_csv(t)));
    }
    if let Some(p) = &bundle.profiles {
        files.push(("profiles.csv", profiles_csv(p)));
    }
    if let Some(info) = info {
        files.push(("run_info.json", serde_json::to_string_pretty(info).expect("run info serializes") + "\n"));
    }
    let mut written = Vec::with_capacity(files.len());
    for (name, contents) in files {
        let path = dir.join(name);
        csv::write(&path, &contents)?;
        written.push(path);
    }
    Ok(written)
}
