//! Euler–Maruyama simulation of `dx = b(x) dt + dW`, `E(dW²) = 2ν dt`,
//! with reflecting walls, and histogram estimates of the stationary density.
//!
//! Each path draws from its own ChaCha8 stream (`seed`, stream = path
//! index), so results do not depend on thread count or scheduling.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{gradient, neumaier_sum, BoundaryCondition, FieldRole, Grid1D, ScalarField};
use crate::stationary::log_density;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeConfig {
    pub dt: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub nu: f64,
    /// Record every `sample_every`-th post-burn-in position (1 = all).
    #[serde(default = "one")]
    pub sample_every: usize,
    /// Keep the first-step Wiener increment of every path.
    #[serde(default)]
    pub log_increments: bool,
}

fn one() -> usize {
    1
}

impl SdeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::NonPositive { name: "dt", value: self.dt });
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::NonPositive { name: "nu", value: self.nu });
        }
        if self.n_paths == 0 {
            return Err(Error::InvalidArgument("n_paths must be at least 1".into()));
        }
        if self.burn_in >= self.n_steps {
            return Err(Error::InvalidArgument(format!(
                "burn_in ({}) must be smaller than n_steps ({})",
                self.burn_in, self.n_steps
            )));
        }
        if self.sample_every == 0 {
            return Err(Error::InvalidArgument("sample_every must be at least 1".into()));
        }
        Ok(())
    }

    /// Recorded positions per path.
    pub fn samples_per_path(&self) -> usize {
        (self.n_steps - self.burn_in).div_ceil(self.sample_every)
    }
}

#[derive(Debug, Clone)]
pub enum InitialCondition {
    Point(f64),
    /// Independent draws from a density on its own grid.
    Density(ScalarField),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    pub config: SdeConfig,
    pub final_positions: Vec<f64>,
    /// Post-burn-in samples, path-major.
    pub sample_positions: Vec<f64>,
    pub increments_logged: Option<Vec<f64>>,
}

/// `b = ν ∇ ln ρ`. On a Dirichlet grid the vanishing wall values of ρ are
/// replaced by the extrapolated log-density.
pub fn drift_from_density(rho: &ScalarField, nu: f64, bc: BoundaryCondition) -> Result<ScalarField> {
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(Error::NonPositive { name: "nu", value: nu });
    }
    let r = log_density(rho, bc)?;
    let g = gradient(&r, bc);
    ScalarField::new(*rho.grid(), g.values().iter().map(|v| 2.0 * nu * v).collect(), FieldRole::Drift)
}

/// Fold `x` back into `[lo, hi]` by repeated mirror reflection.
#[inline]
pub(crate) fn reflect(x: f64, lo: f64, hi: f64) -> f64 {
    if x >= lo && x <= hi {
        return x;
    }
    let l = hi - lo;
    let mut y = (x - lo).rem_euclid(2.0 * l);
    if y > l {
        y = 2.0 * l - y;
    }
    lo + y
}

/// Linear-interpolation drift lookup shared by the SDE integrators.
pub(crate) struct DriftTable<'a> {
    grid: Grid1D,
    inv_h: f64,
    values: &'a [f64],
}

impl<'a> DriftTable<'a> {
    pub(crate) fn new(b: &'a ScalarField) -> Self {
        Self {
            grid: *b.grid(),
            inv_h: 1.0 / b.grid().spacing(),
            values: b.values(),
        }
    }

    #[inline]
    pub(crate) fn at(&self, x: f64) -> f64 {
        let s = ((x - self.grid.x_min()) * self.inv_h).max(0.0);
        let i = (s as usize).min(self.values.len() - 2);
        let t = (s - i as f64).min(1.0);
        let v = &self.values[i..i + 2];
        v[0] + t * (v[1] - v[0])
    }

    #[inline]
    pub(crate) fn reflect(&self, x: f64) -> f64 {
        reflect(x, self.grid.x_min(), self.grid.x_max())
    }
}

/// Reject steps that could jump more than ten cells on drift alone.
pub(crate) fn check_step(b: &ScalarField, dt: f64) -> Result<()> {
    let drift_step = b.max_abs() * dt;
    let limit = 10.0 * b.grid().spacing();
    if drift_step > limit {
        return Err(Error::StepInstability { drift_step, limit });
    }
    Ok(())
}

pub(crate) fn path_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Inverse-CDF sampler for a density, uniform within cells weighted by the
/// trapezoid mass of each cell.
struct DensitySampler {
    grid: Grid1D,
    cdf: Vec<f64>,
}

impl DensitySampler {
    fn new(rho: &ScalarField) -> Result<Self> {
        let v = rho.values();
        if v.iter().any(|p| *p < 0.0) {
            return Err(Error::InvalidDensity("initial density has negative values".into()));
        }
        let h = rho.grid().spacing();
        let mut cdf = Vec::with_capacity(v.len());
        cdf.push(0.0);
        let mut acc = 0.0;
        for k in 0..v.len() - 1 {
            acc += 0.5 * h * (v[k] + v[k + 1]);
            cdf.push(acc);
        }
        if !(acc > 0.0) {
            return Err(Error::InvalidDensity("initial density has zero mass".into()));
        }
        cdf.iter_mut().for_each(|c| *c /= acc);
        Ok(Self { grid: *rho.grid(), cdf })
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        let u: f64 = rng.random();
        let k = self.cdf.partition_point(|c| *c <= u).clamp(1, self.cdf.len() - 1) - 1;
        let width = self.cdf[k + 1] - self.cdf[k];
        let t = if width > 0.0 { (u - self.cdf[k]) / width } else { 0.5 };
        self.grid.x(k) + t * self.grid.spacing()
    }
}

struct PathOutput {
    last: f64,
    samples: Vec<f64>,
    first_increment: f64,
}

/// Simulate `cfg.n_paths` independent paths.
pub fn simulate(b: &ScalarField, cfg: &SdeConfig, x0: &InitialCondition) -> Result<TrajectoryBatch> {
    cfg.validate()?;
    check_step(b, cfg.dt)?;
    let grid = b.grid();
    let sampler = match x0 {
        InitialCondition::Point(x) => {
            if !(*x >= grid.x_min() && *x <= grid.x_max()) {
                return Err(Error::InvalidArgument(format!("start point {x} lies outside the domain")));
            }
            None
        }
        InitialCondition::Density(rho) => Some(DensitySampler::new(rho)?),
    };
    let table = DriftTable::new(b);
    let dt = cfg.dt;
    let sigma = (2.0 * cfg.nu * dt).sqrt();
    let per_path = cfg.samples_per_path();

    let run = |path: usize| -> PathOutput {
        let mut rng = path_rng(cfg.seed, path as u64);
        let mut x = match (&sampler, x0) {
            (Some(s), _) => s.draw(&mut rng),
            (None, InitialCondition::Point(p)) => *p,
            (None, InitialCondition::Density(_)) => unreachable!(),
        };
        let mut samples = Vec::with_capacity(per_path);
        let mut first_increment = 0.0;
        let mut countdown = 0;
        for step in 0..cfg.n_steps {
            let z: f64 = rng.sample(StandardNormal);
            let dw = sigma * z;
            if step == 0 {
                first_increment = dw;
            }
            x = table.reflect(x + table.at(x) * dt + dw);
            if step >= cfg.burn_in {
                if countdown == 0 {
                    samples.push(x);
                    countdown = cfg.sample_every;
                }
                countdown -= 1;
            }
        }
        PathOutput {
            last: x,
            samples,
            first_increment,
        }
    };

    let outputs: Vec<PathOutput> = (0..cfg.n_paths).into_par_iter().map(run).collect();
    let mut final_positions = Vec::with_capacity(cfg.n_paths);
    let mut sample_positions = Vec::with_capacity(cfg.n_paths * per_path);
    let mut increments = Vec::with_capacity(if cfg.log_increments { cfg.n_paths } else { 0 });
    for out in outputs {
        final_positions.push(out.last);
        sample_positions.extend_from_slice(&out.samples);
        if cfg.log_increments {
            increments.push(out.first_increment);
        }
    }
    Ok(TrajectoryBatch {
        config: *cfg,
        final_positions,
        sample_positions,
        increments_logged: cfg.log_increments.then_some(increments),
    })
}

/// Node-centred histogram: bin `i` is `[x_i - h/2, x_i + h/2]` clipped to
/// the domain, so edge bins have half width and the trapezoid integral of
/// the density equals the fraction of samples counted.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub density: ScalarField,
    /// Per-bin standard error of the density, treating samples as independent.
    pub stderr: Vec<f64>,
    pub counts: Vec<u64>,
    /// Samples that fell outside the histogram grid.
    pub outside: u64,
}

impl Histogram {
    pub fn samples(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn bin_edges(&self, i: usize) -> (f64, f64) {
        let g = self.density.grid();
        let h = g.spacing();
        let x = g.x(i);
        ((x - 0.5 * h).max(g.x_min()), (x + 0.5 * h).min(g.x_max()))
    }

    /// Discrete L1 distance between bin probabilities and the exact mass of
    /// `rho` (piecewise-linear) in each bin, plus any mass of `rho` outside
    /// the histogram range.
    pub fn l1_to(&self, rho: &ScalarField) -> f64 {
        let n = self.samples() as f64;
        let g = self.density.grid();
        let inside = rho.integrate_between(g.x_min(), g.x_max());
        let total = rho.integral();
        let diffs = (0..g.len()).map(|i| {
            let (a, b) = self.bin_edges(i);
            (self.counts[i] as f64 / n - rho.integrate_between(a, b)).abs()
        });
        neumaier_sum(diffs) + (total - inside).abs()
    }
}

pub fn stationary_histogram(batch: &TrajectoryBatch, grid: &Grid1D) -> Result<Histogram> {
    histogram_of(&batch.sample_positions, grid)
}

pub fn histogram_of(samples: &[f64], grid: &Grid1D) -> Result<Histogram> {
    let n = grid.len();
    let h = grid.spacing();
    let mut counts = vec![0u64; n];
    let mut outside = 0u64;
    let lo = grid.x_min() - 0.5 * h * 1e-12;
    let hi = grid.x_max() + 0.5 * h * 1e-12;
    for &x in samples {
        if x < lo || x > hi {
            outside += 1;
            continue;
        }
        counts[grid.nearest(x)] += 1;
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptySample);
    }
    let nf = total as f64;
    let mut density = Vec::with_capacity(n);
    let mut stderr = Vec::with_capacity(n);
    for (i, &c) in counts.iter().enumerate() {
        let width = grid.weight(i);
        let p = c as f64 / nf;
        density.push(p / width);
        stderr.push((p * (1.0 - p) / nf).sqrt() / width);
    }
    Ok(Histogram {
        density: ScalarField::new(*grid, density, FieldRole::Density)?,
        stderr,
        counts,
        outside,
    })
}

/// Sample mean and variance with their standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub mean_se: f64,
    pub variance: f64,
    pub variance_se: f64,
    pub count: usize,
}

pub fn moments(samples: &[f64]) -> Result<Moments> {
    if samples.len() < 2 {
        return Err(Error::EmptySample);
    }
    let n = samples.len() as f64;
    let mean = neumaier_sum(samples.iter().copied()) / n;
    let m2 = neumaier_sum(samples.iter().map(|x| (x - mean).powi(2))) / n;
    let m4 = neumaier_sum(samples.iter().map(|x| (x - mean).powi(4))) / n;
    let variance = m2 * n / (n - 1.0);
    Ok(Moments {
        mean,
        mean_se: (variance / n).sqrt(),
        variance,
        variance_se: ((m4 - m2 * m2).max(0.0) / n).sqrt(),
        count: samples.len(),
    })
}

/// One position per line under an `x` header.
pub fn write_samples_csv(batch: &TrajectoryBatch, path: &Path) -> Result<()> {
    let text = crate::csv::render_floats(&["x"], batch.sample_positions.iter().map(|&x| vec![x]));
    crate::csv::write(path, &text)
}
