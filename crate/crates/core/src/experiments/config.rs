//! Experiment configuration: a TOML document with the sections below.
//! Every key has a default except `potential.kind`; unknown keys are errors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fields::{build_grid, FieldRole, Grid1D, ScalarField};
use crate::params::{ParamInputs, PhysicalParams};
use crate::stationary::SolverOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub grid: GridSpec,
    pub potential: PotentialSpec,
    #[serde(default)]
    pub physics: PhysicsSpec,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub transport: TransportSpec,
    #[serde(default)]
    pub sde: SdeSpec,
    #[serde(default)]
    pub kernel: KernelSpec,
    #[serde(default)]
    pub force: ForceSpec,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn default_seed() -> u64 {
    42
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Grid for the stationary solve. The walls carry Dirichlet conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub nodes: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            x_min: -10.0,
            x_max: 10.0,
            nodes: 2001,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    /// `½ m ω² x²`; key `omega` (default 1).
    Harmonic,
    /// `depth (x²/width² - 1)²`; keys `depth`, `width`.
    DoubleWell,
    /// `V = 0`; the grid walls confine.
    Box,
    /// `slope x`; key `slope`.
    Linear,
    /// Two-column CSV `x,V` with a header row, linearly interpolated; key `file`.
    Table,
}

/// `[potential]` section as written. Only the keys of the chosen kind may
/// appear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

/// Validated potential.
#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    Harmonic { omega: f64 },
    DoubleWell { depth: f64, width: f64 },
    Box,
    Linear { slope: f64 },
    Table { file: PathBuf },
}

impl PotentialSpec {
    pub fn of(kind: PotentialKind) -> Self {
        Self {
            kind,
            omega: None,
            depth: None,
            width: None,
            slope: None,
            file: None,
        }
    }

    pub fn resolve(&self) -> Result<Potential> {
        let allowed: &[&str] = match self.kind {
            PotentialKind::Harmonic => &["omega"],
            PotentialKind::DoubleWell => &["depth", "width"],
            PotentialKind::Box => &[],
            PotentialKind::Linear => &["slope"],
            PotentialKind::Table => &["file"],
        };
        let present = [
            ("omega", self.omega.is_some()),
            ("depth", self.depth.is_some()),
            ("width", self.width.is_some()),
            ("slope", self.slope.is_some()),
            ("file", self.file.is_some()),
        ];
        if let Some((key, _)) = present.iter().find(|(k, p)| *p && !allowed.contains(k)) {
            return Err(Error::validation(
                format!("potential.{key}"),
                format!("not a parameter of kind {:?}", self.kind),
            ));
        }
        let need = |key: &str, v: Option<f64>| {
            v.ok_or_else(|| Error::validation(format!("potential.{key}"), "required for this kind"))
        };
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(Error::validation(format!("potential.{key}"), format!("must be positive and finite, got {v}")))
            }
        };
        Ok(match self.kind {
            PotentialKind::Harmonic => Potential::Harmonic {
                omega: positive("omega", self.omega.unwrap_or(1.0))?,
            },
            PotentialKind::DoubleWell => Potential::DoubleWell {
                depth: positive("depth", need("depth", self.depth)?)?,
                width: positive("width", need("width", self.width)?)?,
            },
            PotentialKind::Box => Potential::Box,
            PotentialKind::Linear => {
                let slope = need("slope", self.slope)?;
                if !slope.is_finite() {
                    return Err(Error::validation("potential.slope", "must be finite"));
                }
                Potential::Linear { slope }
            }
            PotentialKind::Table => Potential::Table {
                file: self
                    .file
                    .clone()
                    .ok_or_else(|| Error::validation("potential.file", "required for this kind"))?,
            },
        })
    }

    /// Potential at every node of `grid`.
    pub fn field(&self, grid: Grid1D, mass: f64) -> Result<ScalarField> {
        match self.resolve()? {
            Potential::Harmonic { omega } => {
                let c = 0.5 * mass * omega * omega;
                ScalarField::from_fn(grid, FieldRole::Potential, |x| c * x * x)
            }
            Potential::DoubleWell { depth, width } => {
                ScalarField::from_fn(grid, FieldRole::Potential, |x| depth * ((x / width).powi(2) - 1.0).powi(2))
            }
            Potential::Box => Ok(ScalarField::zeros(grid, FieldRole::Potential)),
            Potential::Linear { slope } => ScalarField::from_fn(grid, FieldRole::Potential, |x| slope * x),
            Potential::Table { file } => {
                let (xs, vs) = read_table(&file)?;
                let (lo, hi) = (xs[0], xs[xs.len() - 1]);
                if grid.x_min() < lo || grid.x_max() > hi {
                    return Err(Error::validation(
                        "potential.file",
                        format!("table covers [{lo}, {hi}] but the grid needs [{}, {}]", grid.x_min(), grid.x_max()),
                    ));
                }
                ScalarField::from_fn(grid, FieldRole::Potential, |x| {
                    let k = xs.partition_point(|&t| t <= x).clamp(1, xs.len() - 1);
                    let t = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
                    vs[k - 1] + t * (vs[k] - vs[k - 1])
                })
            }
        }
    }

    /// Coefficient `c` of `V = c x²` for the harmonic case.
    pub fn harmonic_curvature(&self, mass: f64) -> Option<f64> {
        match self.resolve() {
            Ok(Potential::Harmonic { omega }) => Some(0.5 * mass * omega * omega),
            _ => None,
        }
    }
}

fn read_table(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let bad = |line: usize, msg: &str| Error::validation("potential.file", format!("{}:{line}: {msg}", path.display()));
    let (mut xs, mut vs) = (Vec::new(), Vec::new());
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let mut cells = line.split(',').map(|c| c.trim().parse::<f64>());
        match (cells.next(), cells.next(), cells.next()) {
            (Some(Ok(x)), Some(Ok(v)), None) if x.is_finite() && v.is_finite() => {
                if xs.last().is_some_and(|&p| x <= p) {
                    return Err(bad(i + 1, "x must be strictly increasing"));
                }
                xs.push(x);
                vs.push(v);
            }
            _ => return Err(bad(i + 1, "expected two finite numbers")),
        }
    }
    if xs.len() < 2 {
        return Err(bad(text.lines().count(), "table needs at least two rows"));
    }
    Ok((xs, vs))
}

/// How `tau` or `nu` is fixed so that `gamma = hbar² / 2m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantumMatch {
    /// Choose the charge (hence `tau`) at the given `nu` and temperature.
    Charge,
    /// Choose `nu` at the given `tau`; the configured `nu` is replaced.
    Nu,
    /// Use `tau` (or `charge`) and `nu` as given.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsSpec {
    pub hbar: f64,
    pub mass: f64,
    pub bare_mass: f64,
    pub speed_of_light: f64,
    pub boltzmann: f64,
    pub temperature: f64,
    pub nu: f64,
    /// At most one of `charge` and `tau`; unset means charge 1.
    pub charge: Option<f64>,
    pub tau: Option<f64>,
    pub quantum_match: QuantumMatch,
}

impl Default for PhysicsSpec {
    fn default() -> Self {
        Self {
            hbar: 1.0,
            mass: 1.0,
            bare_mass: 1.0,
            speed_of_light: 1.0,
            boltzmann: 1.0,
            temperature: 0.1,
            nu: 0.5,
            charge: None,
            tau: None,
            quantum_match: QuantumMatch::Charge,
        }
    }
}

impl PhysicsSpec {
    pub fn resolve(&self) -> Result<PhysicalParams> {
        let key = |k: &str| format!("physics.{k}");
        for (name, v) in [
            ("hbar", self.hbar),
            ("mass", self.mass),
            ("bare_mass", self.bare_mass),
            ("speed_of_light", self.speed_of_light),
            ("boltzmann", self.boltzmann),
            ("nu", self.nu),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(key(name), format!("must be positive and finite, got {v}")));
            }
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::validation(
                key("temperature"),
                format!("must be nonnegative and finite, got {}", self.temperature),
            ));
        }
        let c3 = self.speed_of_light.powi(3);
        let charge = match (self.charge, self.tau) {
            (Some(_), Some(_)) => return Err(Error::validation(key("tau"), "give either charge or tau, not both")),
            (Some(q), None) => q,
            (None, Some(t)) => {
                if !(t > 0.0 && t.is_finite()) {
                    return Err(Error::validation(key("tau"), format!("must be positive and finite, got {t}")));
                }
                (1.5 * t * self.bare_mass * c3).sqrt()
            }
            (None, None) => 1.0,
        };
        if !(charge > 0.0 && charge.is_finite()) {
            return Err(Error::validation(key("charge"), format!("must be positive and finite, got {charge}")));
        }
        if self.quantum_match == QuantumMatch::Charge && (self.charge.is_some() || self.tau.is_some()) {
            return Err(Error::validation(
                key("quantum_match"),
                "matching by charge conflicts with an explicit charge or tau",
            ));
        }
        let base = PhysicalParams::new(ParamInputs {
            hbar: self.hbar,
            mass: self.mass,
            bare_mass: self.bare_mass,
            charge,
            speed_of_light: self.speed_of_light,
            boltzmann: self.boltzmann,
            temperature: self.temperature,
            nu: self.nu,
        })
        .map_err(|e| Error::validation("physics", e.to_string()))?;
        let matched = match self.quantum_match {
            QuantumMatch::Charge => base.quantum_matched_by_charge(),
            QuantumMatch::Nu => base.quantum_matched(),
            QuantumMatch::None => Ok(base),
        };
        matched.map_err(|e| match e {
            Error::ZeroTemperature => Error::validation(key("temperature"), "quantum matching needs a positive temperature"),
            e => Error::validation("physics", e.to_string()),
        })
    }
}

/// Coarser grid for the SDE, kernel and force stages, trimmed by `margin`
/// from each wall of the solve grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransportSpec {
    pub margin: f64,
    pub nodes: usize,
}

impl Default for TransportSpec {
    fn default() -> Self {
        Self { margin: 1.0, nodes: 451 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdeStart {
    /// Every path starts at the density maximum.
    Mode,
    /// Starts drawn from the solved density.
    Density,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SdeSpec {
    pub dt: f64,
    pub paths: usize,
    pub burn_in: usize,
    pub samples_per_path: usize,
    pub sample_every: usize,
    pub bin_width: f64,
    pub start: SdeStart,
}

impl Default for SdeSpec {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            paths: 2000,
            burn_in: 10_000,
            samples_per_path: 500,
            sample_every: 500,
            bin_width: 0.1,
            start: SdeStart::Mode,
        }
    }
}

impl SdeSpec {
    pub fn n_steps(&self) -> usize {
        self.burn_in + self.samples_per_path * self.sample_every
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSpec {
    /// Time step; unset means half the positivity bound.
    pub dt: Option<f64>,
    /// Output times for the ergodicity check, starting at 0.
    pub times: Vec<f64>,
    /// Closely spaced times for the backward-equation residual.
    pub backward_times: Vec<f64>,
    /// Start of the main kernel; unset means the density maximum.
    pub start_position: Option<f64>,
    /// Second start for the start-independence check.
    pub tail_position: f64,
    /// Time at which detailed balance is tested.
    pub balance_time: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            dt: None,
            times: vec![0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 12.0],
            backward_times: vec![1.0, 1.02, 1.04],
            start_position: None,
            tail_position: 2.5,
            balance_time: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForceSpec {
    pub n_s: usize,
    pub s_max: f64,
    /// Kernel time step; unset means half the positivity bound.
    pub kernel_dt: Option<f64>,
    pub mc_dt: f64,
    pub mc_paths: usize,
    pub batches: usize,
    pub start_positions: Vec<f64>,
    /// Also evaluate the force at `2 tau` and check the Gibbs residual grows.
    pub tau_doubling: bool,
}

impl Default for ForceSpec {
    fn default() -> Self {
        Self {
            n_s: 16,
            s_max: 20.0,
            kernel_dt: None,
            mc_dt: 0.01,
            mc_paths: 4000,
            batches: 50,
            start_positions: vec![-2.0, -1.0, 0.0, 1.0, 2.0],
            tau_doubling: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Thermal energy `kT` at fixed `gamma`.
    Kt,
    /// `gamma` at fixed `kT`.
    Gamma,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Kt => "kt",
            SweepParameter::Gamma => "gamma",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

/// Pass thresholds; the defaults are the acceptance values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub residual: f64,
    pub gausson_relative: f64,
    pub quantum_identity: f64,
    pub balance: f64,
    pub histogram_l1: f64,
    pub increment_sigmas: f64,
    pub mass: f64,
    pub ergodic_l1: f64,
    pub backward: f64,
    pub detailed_balance: f64,
    /// Distance between the kernel's invariant density and the solved one.
    pub invariant_density_l1: f64,
    pub force_sigmas: f64,
    pub closed_form_relative: f64,
    pub gibbs: f64,
    pub identity: f64,
    pub tau_doubling_ratio: f64,
    pub zero_temperature_shift: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            residual: 1e-8,
            gausson_relative: 1e-3,
            quantum_identity: 1e-12,
            balance: 1e-6,
            histogram_l1: 0.02,
            increment_sigmas: 3.0,
            mass: 1e-8,
            ergodic_l1: 1e-3,
            backward: 2e-2,
            detailed_balance: 1e-6,
            invariant_density_l1: 1e-3,
            force_sigmas: 3.0,
            closed_form_relative: 1e-3,
            gibbs: 2e-2,
            identity: 2e-2,
            tau_doubling_ratio: 5.0,
            zero_temperature_shift: 5e-3,
        }
    }
}

impl ExperimentConfig {
    pub fn grid(&self) -> Result<Grid1D> {
        build_grid(self.grid.x_min, self.grid.x_max, self.grid.nodes)
    }

    pub fn transport_grid(&self) -> Result<Grid1D> {
        let m = self.transport.margin;
        build_grid(self.grid.x_min + m, self.grid.x_max - m, self.transport.nodes)
    }

    pub fn params(&self) -> Result<PhysicalParams> {
        self.physics.resolve()
    }

    /// Hex SHA-256 of the canonical JSON form (keys sorted).
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let bytes = serde_json::to_vec(&value).expect("value serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// All checks that do not need the potential table or a solve.
    pub fn validate(&self) -> Result<()> {
        let finite_pos = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::validation(key, format!("must be positive and finite, got {v}")))
            }
        };
        let at_least = |key: &str, v: usize, min: usize| {
            if v >= min {
                Ok(())
            } else {
                Err(Error::validation(key, format!("must be at least {min}, got {v}")))
            }
        };
        let g = &self.grid;
        if !(g.x_min.is_finite() && g.x_max.is_finite() && g.x_max > g.x_min) {
            return Err(Error::validation("grid.x_max", "grid bounds must be finite with x_max > x_min"));
        }
        at_least("grid.nodes", g.nodes, 3)?;
        self.potential.resolve()?;
        self.params()?;

        let s = &self.solver;
        finite_pos("solver.tol", s.tol)?;
        finite_pos("solver.dtau", s.dtau)?;
        finite_pos("solver.dtau_max", s.dtau_max)?;
        finite_pos("solver.newton_switch", s.newton_switch)?;
        at_least("solver.max_iterations", s.max_iterations, 1)?;

        let t = &self.transport;
        if !(t.margin >= 0.0 && 2.0 * t.margin < g.x_max - g.x_min) {
            return Err(Error::validation("transport.margin", "must be nonnegative and leave a nonempty interval"));
        }
        at_least("transport.nodes", t.nodes, 3)?;

        let sde = &self.sde;
        finite_pos("sde.dt", sde.dt)?;
        finite_pos("sde.bin_width", sde.bin_width)?;
        at_least("sde.paths", sde.paths, 1)?;
        at_least("sde.samples_per_path", sde.samples_per_path, 2)?;
        at_least("sde.sample_every", sde.sample_every, 1)?;
        if sde.bin_width > g.x_max - g.x_min - 2.0 * t.margin {
            return Err(Error::validation("sde.bin_width", "wider than the transport interval"));
        }

        let k = &self.kernel;
        if let Some(dt) = k.dt {
            finite_pos("kernel.dt", dt)?;
        }
        check_times("kernel.times", &k.times, true)?;
        check_times("kernel.backward_times", &k.backward_times, false)?;
        if k.backward_times.len() < 3 {
            return Err(Error::validation("kernel.backward_times", "needs at least three times"));
        }
        finite_pos("kernel.balance_time", k.balance_time)?;
        if !k.tail_position.is_finite() || k.start_position.is_some_and(|x| !x.is_finite()) {
            return Err(Error::validation("kernel.start_position", "positions must be finite"));
        }

        let f = &self.force;
        at_least("force.n_s", f.n_s, 1)?;
        finite_pos("force.s_max", f.s_max)?;
        finite_pos("force.mc_dt", f.mc_dt)?;
        if let Some(dt) = f.kernel_dt {
            finite_pos("force.kernel_dt", dt)?;
        }
        at_least("force.mc_paths", f.mc_paths, 2)?;
        at_least("force.batches", f.batches, 2)?;
        if f.batches > f.mc_paths {
            return Err(Error::validation("force.batches", "more batches than paths"));
        }
        if f.start_positions.is_empty() || f.start_positions.iter().any(|x| !x.is_finite()) {
            return Err(Error::validation("force.start_positions", "needs at least one finite position"));
        }

        if let Some(sw) = &self.sweep {
            if sw.values.is_empty() {
                return Err(Error::validation("sweep.values", "sweep list is empty"));
            }
            if let Some(v) = sw.values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
                return Err(Error::validation("sweep.values", format!("values must be positive and finite, got {v}")));
            }
        }

        let tol = serde_json::to_value(self.tolerances).expect("tolerances serialize");
        for (name, v) in tol.as_object().expect("struct") {
            finite_pos(&format!("tolerances.{name}"), v.as_f64().unwrap_or(f64::NAN))?;
        }
        Ok(())
    }
}

fn check_times(key: &str, times: &[f64], starts_at_zero: bool) -> Result<()> {
    if times.is_empty() || times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::validation(key, "times must be finite and nonnegative"));
    }
    if starts_at_zero && times[0] != 0.0 {
        return Err(Error::validation(key, "first time must be 0"));
    }
    if !starts_at_zero && times[0] <= 0.0 {
        return Err(Error::validation(key, "times must be positive"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::validation(key, "times must be strictly increasing"));
    }
    Ok(())
}

/// Parse and validate a configuration document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Read a configuration file; a relative table path is resolved against
/// the file's directory.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut cfg = parse_config(&text)?;
    if let Some(file) = &mut cfg.potential.file {
        if file.is_relative() {
            if let Some(dir) = path.parent() {
                *file = dir.join(&*file);
            }
        }
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[potential]\nkind = \"harmonic\"\nomega = 1.0\n";

    #[test]
    fn minimal_harmonic_gets_dimensionless_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        let p = cfg.params().unwrap();
        assert_eq!((p.hbar(), p.mass(), p.boltzmann()), (1.0, 1.0, 1.0));
        assert!((p.gamma() - 0.5).abs() < 1e-15);
        assert!((p.tau() - 5.0).abs() < 1e-12);
        assert_eq!(cfg.grid, GridSpec::default());
        assert_eq!(cfg.tolerances, Tolerances::default());
    }

    fn err_of(text: &str) -> Error {
        parse_config(text).unwrap_err()
    }

    #[test]
    fn negative_temperature_names_the_key() {
        let e = err_of(&format!("{MINIMAL}[physics]\ntemperature = -1.0\n"));
        assert!(matches!(&e, Error::Validation { key, .. } if key == "physics.temperature"), "{e}");
    }

    #[test]
    fn unknown_keys_are_rejected_with_line() {
        for text in [format!("foo = 1\n{MINIMAL}"), format!("{MINIMAL}foo = 1\n"), format!("{MINIMAL}[sde]\nfoo = 2\n")] {
            let e = err_of(&text);
            let msg = e.to_string();
            assert!(matches!(e, Error::ConfigParse(_)) && msg.contains("foo") && msg.contains("line"), "{msg}");
        }
        let e = err_of("[potential]\nkind = \"quartic\"\n").to_string();
        assert!(e.contains("quartic") && e.contains("line 2"), "{e}");
        let e = err_of(&format!("{MINIMAL}slope = 1.0\n"));
        assert!(matches!(&e, Error::Validation { key, .. } if key == "potential.slope"), "{e}");
        let e = err_of("[potential]\nkind = \"double_well\"\ndepth = 1.0\n");
        assert!(matches!(&e, Error::Validation { key, .. } if key == "potential.width"), "{e}");
    }

    #[test]
    fn sweep_values_are_checked() {
        let e = err_of(&format!("{MINIMAL}[sweep]\nparameter = \"kt\"\nvalues = []\n"));
        assert!(matches!(&e, Error::Validation { key, .. } if key == "sweep.values"));
        let e = err_of(&format!("{MINIMAL}[sweep]\nparameter = \"gamma\"\nvalues = [0.1, -1.0]\n"));
        assert!(matches!(&e, Error::Validation { key, .. } if key == "sweep.values"));
    }

    #[test]
    fn charge_match_conflicts_with_explicit_tau() {
        let e = err_of(&format!("{MINIMAL}[physics]\ntau = 2.0\n"));
        assert!(matches!(&e, Error::Validation { key, .. } if key == "physics.quantum_match"));
        let cfg = parse_config(&format!("{MINIMAL}[physics]\ntau = 2.0\nquantum_match = \"nu\"\n")).unwrap();
        let p = cfg.params().unwrap();
        assert!((p.gamma() - 0.5).abs() < 1e-14 && (p.nu() - 1.25).abs() < 1e-12);
    }

    #[test]
    fn hash_ignores_key_order_and_tracks_values() {
        let a = parse_config("seed = 7\n[grid]\nx_min = -5.0\nx_max = 5.0\n[potential]\nkind = \"box\"\n").unwrap();
        let b = parse_config("seed = 7\n[potential]\nkind = \"box\"\n[grid]\nx_max = 5.0\nx_min = -5.0\n").unwrap();
        let c = parse_config("seed = 8\n[potential]\nkind = \"box\"\n[grid]\nx_max = 5.0\nx_min = -5.0\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn potentials_evaluate() {
        let g = build_grid(-2.0, 2.0, 5).unwrap();
        let dw = PotentialSpec {
            depth: Some(2.0),
            width: Some(1.0),
            ..PotentialSpec::of(PotentialKind::DoubleWell)
        };
        assert_eq!(dw.field(g, 1.0).unwrap().values(), &[18.0, 0.0, 2.0, 0.0, 18.0]);
        let h = PotentialSpec {
            omega: Some(2.0),
            ..PotentialSpec::of(PotentialKind::Harmonic)
        };
        assert_eq!(h.field(g, 0.5).unwrap().values()[0], 4.0);
        assert_eq!(h.harmonic_curvature(0.5), Some(1.0));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.csv");
        std::fs::write(&path, "x,V\n-3,9\n0,0\n3,9\n").unwrap();
        let t = PotentialSpec {
            file: Some(path.clone()),
            ..PotentialSpec::of(PotentialKind::Table)
        };
        assert_eq!(t.field(g, 1.0).unwrap().values(), &[6.0, 3.0, 0.0, 3.0, 6.0]);
        std::fs::write(&path, "x,V\n-1,1\n1,1\n").unwrap();
        assert!(matches!(t.field(g, 1.0), Err(Error::Validation { .. })));
    }
}
