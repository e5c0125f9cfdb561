//! Transition function `P_t(y, x)` of the diffusion with drift `b` and
//! diffusion constant `ν`, evolved by the forward equation
//! `∂_t P = -∂_y(b P) + ν ∂²_y P` with no-flux walls.
//!
//! Space is discretized by finite volumes around the nodes (width `h`,
//! `h/2` at the walls) with the exponentially fitted (Scharfetter–Gummel)
//! edge flux
//!
//! ```text
//! J_{i+½} = (ν/h) [B(-β) P_i - B(β) P_{i+1}],   β = h (b_i + b_{i+1}) / 2ν,
//! B(z) = z / (e^z - 1),
//! ```
//!
//! and time by Crank–Nicolson. The scheme conserves trapezoidal mass,
//! keeps columns nonnegative for `dt <= max_stable_dt`, and is exactly
//! reversible with respect to `ρ̃_i ∝ exp(Σ_{e<i} β_e)`; see
//! [`stationary_density_from_drift`].

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{interior_mask, l1_distance, neumaier_sum, FieldRole, Grid1D, ScalarField};
use crate::tridiag::{tri_apply, ThomasFactor};

/// Columns may dip this far below zero before evolution is declared unstable.
pub const NEGATIVITY_FLOOR: f64 = -1e-12;
/// Largest tolerated change of total mass in a single step.
pub const STEP_MASS_DRIFT: f64 = 1e-6;
/// Final L1 distance required by [`ergodic_limit`].
pub const ERGODIC_TOL: f64 = 1e-3;
/// Allowed rise between successive L1 values once they reach the
/// discretization floor.
pub const ERGODIC_SLACK: f64 = 1e-9;

/// `z / (e^z - 1)`.
fn bernoulli(z: f64) -> f64 {
    if z == 0.0 {
        1.0
    } else if z.abs() < 1e-5 {
        1.0 - 0.5 * z + z * z / 12.0
    } else {
        z / z.exp_m1()
    }
}

/// Finite-volume generator: `V dP/dt = A P`.
#[derive(Debug, Clone)]
pub(crate) struct Generator {
    grid: Grid1D,
    vol: Vec<f64>,
    sub: Vec<f64>,
    diag: Vec<f64>,
    sup: Vec<f64>,
    beta: Vec<f64>,
}

impl Generator {
    pub(crate) fn new(b: &ScalarField, nu: f64) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::NonPositive { name: "nu", value: nu });
        }
        let grid = *b.grid();
        let n = grid.len();
        let h = grid.spacing();
        let bv = b.values();
        let beta: Vec<f64> = (0..n - 1).map(|e| h * (bv[e] + bv[e + 1]) / (2.0 * nu)).collect();
        let k = nu / h;
        let mut sub = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut sup = vec![0.0; n];
        for (e, &be) in beta.iter().enumerate() {
            // Flux through edge e leaves node e and enters node e+1.
            let out_left = k * bernoulli(-be);
            let in_right = k * bernoulli(be);
            diag[e] -= out_left;
            sup[e] += in_right;
            sub[e + 1] += out_left;
            diag[e + 1] -= in_right;
        }
        Ok(Self {
            grid,
            vol: (0..n).map(|i| grid.weight(i)).collect(),
            sub,
            diag,
            sup,
            beta,
        })
    }

    /// Largest step keeping the explicit half of Crank–Nicolson nonnegative.
    pub(crate) fn max_stable_dt(&self) -> f64 {
        self.vol
            .iter()
            .zip(&self.diag)
            .map(|(v, d)| 2.0 * v / d.abs())
            .fold(f64::INFINITY, f64::min)
    }

    pub(crate) fn stepper(&self, dt: f64) -> CnStep {
        let half = 0.5 * dt;
        let lhs_sub: Vec<f64> = self.sub.iter().map(|a| -half * a).collect();
        let lhs_sup: Vec<f64> = self.sup.iter().map(|a| -half * a).collect();
        let lhs_diag: Vec<f64> = self.vol.iter().zip(&self.diag).map(|(v, a)| v - half * a).collect();
        let rhs_sub: Vec<f64> = self.sub.iter().map(|a| half * a).collect();
        let rhs_sup: Vec<f64> = self.sup.iter().map(|a| half * a).collect();
        let rhs_diag: Vec<f64> = self.vol.iter().zip(&self.diag).map(|(v, a)| v + half * a).collect();
        let n = self.vol.len();
        // Transposes: (T^T)_{i,i-1} = T_{i-1,i} and (T^T)_{i,i+1} = T_{i+1,i}.
        let transpose = |sub: &[f64], sup: &[f64]| -> (Vec<f64>, Vec<f64>) {
            let mut ts = vec![0.0; n];
            let mut tp = vec![0.0; n];
            for i in 1..n {
                ts[i] = sup[i - 1];
                tp[i - 1] = sub[i];
            }
            (ts, tp)
        };
        let (lt_sub, lt_sup) = transpose(&lhs_sub, &lhs_sup);
        let (rt_sub, rt_sup) = transpose(&rhs_sub, &rhs_sup);
        CnStep {
            lhs: ThomasFactor::new(&lhs_sub, &lhs_diag, &lhs_sup),
            lhs_t: ThomasFactor::new(&lt_sub, &lhs_diag, &lt_sup),
            rhs: [rhs_sub, rhs_diag.clone(), rhs_sup],
            rhs_t: [rt_sub, rhs_diag, rt_sup],
        }
    }

    fn mass(&self, p: &[f64]) -> f64 {
        neumaier_sum(self.vol.iter().zip(p).map(|(v, p)| v * p))
    }

    /// Discrete delta at `node`: unit mass in one control volume.
    fn delta(&self, node: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.vol.len()];
        p[node] = 1.0 / self.vol[node];
        p
    }
}

pub(crate) struct CnStep {
    lhs: ThomasFactor,
    lhs_t: ThomasFactor,
    rhs: [Vec<f64>; 3],
    rhs_t: [Vec<f64>; 3],
}

impl CnStep {
    /// `p ← (V - dt/2 A)⁻¹ (V + dt/2 A) p`.
    pub(crate) fn forward(&self, p: &mut [f64], work: &mut [f64]) {
        tri_apply(&self.rhs[0], &self.rhs[1], &self.rhs[2], p, work);
        self.lhs.solve(work);
        p.copy_from_slice(work);
    }

    /// Transpose of [`CnStep::forward`].
    pub(crate) fn adjoint(&self, u: &mut [f64], work: &mut [f64]) {
        work.copy_from_slice(u);
        self.lhs_t.solve(work);
        tri_apply(&self.rhs_t[0], &self.rhs_t[1], &self.rhs_t[2], work, u);
    }
}

/// Number of equal substeps of length at most `dt` covering `span`.
pub(crate) fn substeps(span: f64, dt: f64) -> usize {
    ((span / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

/// Parameters a kernel was evolved with, kept so the backward-equation
/// check can rebuild the start-point family independently of its inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionRecord {
    pub drift: ScalarField,
    pub nu: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    pub grid: Grid1D,
    pub x0_index: usize,
    pub times: Vec<f64>,
    /// `P_{times[k]}(·, x0)`.
    pub columns: Vec<ScalarField>,
    pub record: EvolutionRecord,
}

impl TransitionKernel {
    /// Largest deviation of any column's mass from 1.
    pub fn max_mass_error(&self) -> f64 {
        self.columns.iter().map(|c| (c.integral() - 1.0).abs()).fold(0.0, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.columns
            .iter()
            .flat_map(|c| c.values().iter().copied())
            .fold(f64::INFINITY, f64::min)
    }

    /// True when the `t = 0` column is exactly `1/V_{x0}` at the start node and 0 elsewhere.
    pub fn starts_as_delta(&self) -> bool {
        let c = &self.columns[0];
        self.times[0] == 0.0
            && c.values().iter().enumerate().all(|(i, &v)| {
                if i == self.x0_index {
                    v == 1.0 / self.grid.weight(i)
                } else {
                    v == 0.0
                }
            })
    }
}

/// Largest Crank–Nicolson step that keeps columns nonnegative.
pub fn max_stable_dt(b: &ScalarField, nu: f64) -> Result<f64> {
    Ok(Generator::new(b, nu)?.max_stable_dt())
}

fn validate_times(times: &[f64]) -> Result<()> {
    if times.first() != Some(&0.0) {
        return Err(Error::InvalidArgument("kernel times must start at 0".into()));
    }
    if times.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
        return Err(Error::InvalidArgument("kernel times must be strictly increasing".into()));
    }
    Ok(())
}

/// Evolve the discrete delta at `x0_index` and record columns at `times`.
///
/// Between consecutive requested times the interval is split into equal
/// substeps no longer than `dt`.
pub fn evolve_forward(b: &ScalarField, nu: f64, x0_index: usize, times: &[f64], dt: f64) -> Result<TransitionKernel> {
    let gen = Generator::new(b, nu)?;
    evolve_with(&gen, b, nu, x0_index, times, dt)
}

fn evolve_with(
    gen: &Generator,
    b: &ScalarField,
    nu: f64,
    x0_index: usize,
    times: &[f64],
    dt: f64,
) -> Result<TransitionKernel> {
    validate_times(times)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::NonPositive { name: "dt", value: dt });
    }
    let grid = gen.grid;
    if x0_index >= grid.len() {
        return Err(Error::InvalidArgument(format!(
            "start node {x0_index} outside grid of {} nodes",
            grid.len()
        )));
    }
    let mut p = gen.delta(x0_index);
    let mut work = vec![0.0; p.len()];
    let mut columns = vec![ScalarField::new_unchecked(grid, p.clone(), FieldRole::Density)];
    let mut mass = gen.mass(&p);
    for w in times.windows(2) {
        let n = substeps(w[1] - w[0], dt);
        let step_dt = (w[1] - w[0]) / n as f64;
        let step = gen.stepper(step_dt);
        for k in 0..n {
            step.forward(&mut p, &mut work);
            let t = w[0] + (k + 1) as f64 * step_dt;
            let next_mass = gen.mass(&p);
            if (next_mass - mass).abs() > STEP_MASS_DRIFT || !next_mass.is_finite() {
                return Err(Error::KernelInstability {
                    time: t,
                    detail: format!("mass changed by {:e} in one step", next_mass - mass),
                });
            }
            if let Some(v) = p.iter().find(|v| **v < NEGATIVITY_FLOOR) {
                return Err(Error::KernelInstability {
                    time: t,
                    detail: format!("negative density {v:e}; reduce dt below {:e}", gen.max_stable_dt()),
                });
            }
            mass = next_mass;
        }
        columns.push(ScalarField::new_unchecked(grid, p.clone(), FieldRole::Density));
    }
    Ok(TransitionKernel {
        grid,
        x0_index,
        times: times.to_vec(),
        columns,
        record: EvolutionRecord {
            drift: b.clone(),
            nu,
            dt,
        },
    })
}

/// [`evolve_forward`] from every node in `starts`, in parallel.
pub fn evolve_family(
    b: &ScalarField,
    nu: f64,
    starts: &[usize],
    times: &[f64],
    dt: f64,
) -> Result<Vec<TransitionKernel>> {
    let gen = Generator::new(b, nu)?;
    starts
        .par_iter()
        .map(|&s| evolve_with(&gen, b, nu, s, times, dt))
        .collect()
}

/// `E_x[g(X_t)]` at every start node for each of the ascending `times`,
/// by transposed steps. One pass serves all times: each segment between
/// consecutive times gets its own uniform substeps, and steps of different
/// length commute because they are rational functions of one operator.
pub(crate) fn backward_expectations(gen: &Generator, g: &[f64], times: &[f64], dt: f64) -> Vec<Vec<f64>> {
    let mut u: Vec<f64> = gen.vol.iter().zip(g).map(|(v, g)| v * g).collect();
    let mut work = vec![0.0; u.len()];
    let mut now = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        debug_assert!(t >= now);
        if t > now {
            let n = substeps(t - now, dt);
            let step = gen.stepper((t - now) / n as f64);
            for _ in 0..n {
                step.adjoint(&mut u, &mut work);
            }
            now = t;
        }
        out.push(u.iter().zip(&gen.vol).map(|(u, v)| u / v).collect());
    }
    out
}

/// Exact stationary state of the discrete forward operator,
/// `ρ̃_i ∝ exp(Σ_{e<i} β_e)` with `β_e = h (b_e + b_{e+1}) / 2ν`.
pub fn stationary_density_from_drift(b: &ScalarField, nu: f64) -> Result<ScalarField> {
    let gen = Generator::new(b, nu)?;
    let mut phi = Vec::with_capacity(gen.vol.len());
    phi.push(0.0);
    let mut acc = 0.0;
    for be in &gen.beta {
        acc += be;
        phi.push(acc);
    }
    let top = phi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    ScalarField::normalized_density(gen.grid, phi.iter().map(|p| (p - top).exp()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackwardReport {
    /// `‖∂_t P - (b ∂_x + ν ∂²_x) P‖ / ‖∂_t P‖` over masked `(y, x)` pairs.
    pub relative_residual: f64,
    pub time_columns: usize,
    pub pairs_checked: usize,
}

/// Check the backward equation `∂_t P = b(x) ∂_x P + ν ∂²_x P` in the
/// start variable.
///
/// The start-point family is rebuilt from the kernel's own evolution
/// record; `b` and `nu` enter only the operator being tested, so a
/// mismatched `nu` shows up as a large residual. Time derivatives are
/// three-point differences across the positive-time columns.
pub fn verify_backward(k: &TransitionKernel, b: &ScalarField, nu: f64) -> Result<BackwardReport> {
    let positive = k.times.iter().filter(|t| **t > 0.0).count();
    if positive < 3 {
        return Err(Error::InsufficientTimes(positive));
    }
    if b.grid() != &k.grid {
        return Err(Error::LengthMismatch {
            expected: k.grid.len(),
            got: b.len(),
        });
    }
    let rec = &k.record;
    let n = k.grid.len();
    let starts: Vec<usize> = (0..n).collect();
    let family = evolve_family(&rec.drift, rec.nu, &starts, &k.times, rec.dt)?;
    let rho_tilde = stationary_density_from_drift(&rec.drift, rec.nu)?;
    let mask = interior_mask(&rho_tilde);
    let h = k.grid.spacing();
    let bv = b.values();
    let first = k.times.len() - positive;
    let mut num = Vec::new();
    let mut den = Vec::new();
    let mut columns = 0;
    for c in (first + 1)..(k.times.len() - 1) {
        let (t0, t1, t2) = (k.times[c - 1], k.times[c], k.times[c + 1]);
        let (h1, h2) = (t1 - t0, t2 - t1);
        let w0 = -h2 / (h1 * (h1 + h2));
        let w1 = (h2 - h1) / (h1 * h2);
        let w2 = h1 / (h2 * (h1 + h2));
        columns += 1;
        for y in (0..n).filter(|&y| mask[y]) {
            let at = |x: usize, col: usize| family[x].columns[col].values()[y];
            for x in (1..n - 1).filter(|&x| mask[x]) {
                let dt = w0 * at(x, c - 1) + w1 * at(x, c) + w2 * at(x, c + 1);
                let dx = (at(x + 1, c) - at(x - 1, c)) / (2.0 * h);
                let dxx = (at(x + 1, c) - 2.0 * at(x, c) + at(x - 1, c)) / (h * h);
                let r = dt - (bv[x] * dx + nu * dxx);
                num.push(r * r);
                den.push(dt * dt);
            }
        }
    }
    let pairs = num.len() / columns.max(1);
    Ok(BackwardReport {
        relative_residual: (neumaier_sum(num) / neumaier_sum(den)).sqrt(),
        time_columns: columns,
        pairs_checked: pairs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicReport {
    pub times: Vec<f64>,
    pub l1: Vec<f64>,
    pub monotone: bool,
    pub final_l1: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// L1 distance of every column to `rho`, with success when the sequence is
/// nonincreasing (up to [`ERGODIC_SLACK`]) and ends below [`ERGODIC_TOL`].
/// `rho` is interpolated onto the kernel grid if it lives elsewhere.
pub fn ergodic_limit(k: &TransitionKernel, rho: &ScalarField) -> ErgodicReport {
    let target = if rho.grid() == &k.grid {
        rho.clone()
    } else {
        ScalarField::new_unchecked(k.grid, rho.resample(&k.grid), FieldRole::Density)
    };
    let l1: Vec<f64> = k.columns.iter().map(|c| l1_distance(c, &target)).collect();
    let monotone = l1.windows(2).all(|w| w[1] <= w[0] + ERGODIC_SLACK);
    let final_l1 = *l1.last().expect("kernel has a t = 0 column");
    ErgodicReport {
        times: k.times.clone(),
        monotone,
        final_l1,
        tolerance: ERGODIC_TOL,
        pass: monotone && final_l1 <= ERGODIC_TOL && k.times.len() >= 3,
        l1,
    }
}

/// `max |ρ(x) P_t(y,x) - ρ(y) P_t(x,y)| / max ρ(x) P_t(y,x)` over all node pairs.
pub fn detailed_balance_asymmetry(family: &[TransitionKernel], column: usize, rho: &ScalarField) -> Result<f64> {
    let n = rho.len();
    if family.len() != n || family.iter().enumerate().any(|(i, k)| k.x0_index != i) {
        return Err(Error::InvalidArgument(
            "detailed balance needs kernels from every start node, in order".into(),
        ));
    }
    let m = |y: usize, x: usize| rho.values()[x] * family[x].columns[column].values()[y];
    let mut worst = 0.0_f64;
    let mut scale = 0.0_f64;
    for x in 0..n {
        for y in 0..n {
            scale = scale.max(m(y, x).abs());
            if y > x {
                worst = worst.max((m(y, x) - m(x, y)).abs());
            }
        }
    }
    Ok(worst / scale)
}

/// Columns as a matrix: one row per `y` node, one column per time.
pub fn write_kernel_csv(k: &TransitionKernel, path: &Path) -> Result<()> {
    let mut header = vec!["y".to_string()];
    header.extend(k.times.iter().map(|t| format!("t={}", crate::csv::float(*t))));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = (0..k.grid.len()).map(|i| {
        let mut r = vec![k.grid.x(i)];
        r.extend(k.columns.iter().map(|c| c.values()[i]));
        r
    });
    crate::csv::write(path, &crate::csv::render_floats(&header, rows))
}
