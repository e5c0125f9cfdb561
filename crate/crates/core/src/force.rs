//! Preacceleration-averaged force
//!
//! ```text
//! F_E(x) = -∫₀^∞ ds e^{-s} E[∇V(x(t + τ s)) | x(t) = x]
//! ```
//!
//! evaluated two ways: deterministically from the transition kernel with a
//! Gauss–Laguerre rule in `s`, and by Monte Carlo over forward paths from
//! `x` (the stationary conditional expectation equals forward evolution by
//! the Markov property). Also the residual checks relating `F_E` to the
//! stationary density and to the drift.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::{check_step, path_rng, DriftTable, SdeConfig};
use crate::error::{Error, Result};
use crate::fields::{gradient, interior_mask, laplacian, neumaier_sum, BoundaryCondition, FieldRole, Grid1D, ScalarField};
use crate::kernel::{backward_expectations, stationary_density_from_drift, Generator};
use crate::quadrature::gauss_laguerre;
use crate::stationary::{curvature_ratio, log_density};

use rand::Rng;
use rand_distr::StandardNormal;

/// Relative budget for the neglected tail `e^{-s_max}`.
pub const TAIL_BUDGET: f64 = 1e-6;
/// Default number of batches for the Monte Carlo standard error.
pub const MC_BATCHES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForceMethod {
    KernelQuadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceEstimate {
    pub grid: Grid1D,
    /// Grid nodes at which the force was evaluated.
    pub nodes: Vec<usize>,
    pub values: Vec<f64>,
    /// Zero for the kernel method.
    pub stderr: Vec<f64>,
    pub method: ForceMethod,
    pub tau: f64,
    pub s_quadrature: String,
    /// `-∇V` at the evaluated nodes.
    pub external_force: Vec<f64>,
}

impl ForceEstimate {
    /// The force as a field, when every grid node was evaluated.
    pub fn field(&self) -> Option<ScalarField> {
        (self.nodes.len() == self.grid.len() && self.nodes.iter().enumerate().all(|(i, n)| i == *n))
            .then(|| ScalarField::new_unchecked(self.grid, self.values.clone(), FieldRole::Force))
    }

    pub fn positions(&self) -> Vec<f64> {
        self.nodes.iter().map(|&i| self.grid.x(i)).collect()
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositive { name: "tau", value: tau })
    }
}

fn check_tail(s_max: f64) -> Result<()> {
    let tail = (-s_max).exp();
    if !(tail <= TAIL_BUDGET) {
        return Err(Error::QuadratureBudget {
            tail,
            budget: TAIL_BUDGET,
        });
    }
    Ok(())
}

fn check_same_grid(a: &ScalarField, b: &ScalarField) -> Result<()> {
    if a.grid() != b.grid() {
        return Err(Error::InvalidArgument("potential and drift must share one grid".into()));
    }
    Ok(())
}

/// Kernel-quadrature force at every node.
///
/// For each Gauss–Laguerre abscissa `s_j`, `E_x[∇V(X_{τ s_j})]` is obtained
/// for all `x` at once by stepping the transpose of the forward scheme from
/// `∇V`, in one pass through the ascending abscissas; this equals
/// integrating each forward column against `∇V`. The rule
/// integrates the `e^{-s}` weight over the whole half line, so `s_max`
/// enters only the tail-budget check. `dt` defaults to half the positivity
/// bound of the forward scheme.
pub fn force_kernel(
    v: &ScalarField,
    b: &ScalarField,
    nu: f64,
    tau: f64,
    s_max: f64,
    n_s: usize,
    dt: Option<f64>,
) -> Result<ForceEstimate> {
    check_tau(tau)?;
    check_same_grid(v, b)?;
    check_tail(s_max)?;
    let gen = Generator::new(b, nu)?;
    let dt = dt.unwrap_or_else(|| 0.5 * gen.max_stable_dt());
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::NonPositive { name: "dt", value: dt });
    }
    let gv = gradient(v, BoundaryCondition::DirichletZero);
    let (s, w) = gauss_laguerre(n_s)?;
    let times: Vec<f64> = s.iter().map(|sj| tau * sj).collect();
    let expectations = backward_expectations(&gen, gv.values(), &times, dt);
    let n = v.len();
    let values: Vec<f64> = (0..n)
        .map(|x| -neumaier_sum(w.iter().zip(&expectations).map(|(wj, e)| wj * e[x])))
        .collect();
    Ok(ForceEstimate {
        grid: *v.grid(),
        nodes: (0..n).collect(),
        values,
        stderr: vec![0.0; n],
        method: ForceMethod::KernelQuadrature,
        tau,
        s_quadrature: format!("gauss-laguerre n={n_s}, kernel dt={dt:e}"),
        external_force: gv.values().iter().map(|g| -g).collect(),
    })
}

/// Monte Carlo force at `start_nodes`.
///
/// Every path starts at the node, runs Euler–Maruyama with the drift `b`,
/// and accumulates `∫₀^{s_max} e^{-s} ∇V(x(τ s)) ds` by the trapezoidal
/// rule at spacing `ds = dt/τ`. The standard error comes from batch means
/// over [`MC_BATCHES`] contiguous groups of paths. Path `p` at node `i`
/// uses RNG stream `(i << 32) | p`.
pub fn force_monte_carlo(
    v: &ScalarField,
    b: &ScalarField,
    cfg: &SdeConfig,
    tau: f64,
    s_max: f64,
    start_nodes: &[usize],
) -> Result<ForceEstimate> {
    force_monte_carlo_batched(v, b, cfg, tau, s_max, start_nodes, MC_BATCHES)
}

pub fn force_monte_carlo_batched(
    v: &ScalarField,
    b: &ScalarField,
    cfg: &SdeConfig,
    tau: f64,
    s_max: f64,
    start_nodes: &[usize],
    batches: usize,
) -> Result<ForceEstimate> {
    check_tau(tau)?;
    check_same_grid(v, b)?;
    if cfg.n_paths == 0 {
        return Err(Error::InvalidArgument("force estimate needs at least one path".into()));
    }
    if !(cfg.dt > 0.0 && cfg.dt.is_finite()) {
        return Err(Error::NonPositive { name: "dt", value: cfg.dt });
    }
    if !(cfg.nu > 0.0 && cfg.nu.is_finite()) {
        return Err(Error::NonPositive { name: "nu", value: cfg.nu });
    }
    if !(s_max > 0.0 && s_max.is_finite()) {
        return Err(Error::NonPositive { name: "s_max", value: s_max });
    }
    let limit = tau / 20.0;
    if cfg.dt > limit {
        return Err(Error::StepResolution { dt: cfg.dt, limit });
    }
    check_step(b, cfg.dt)?;
    let grid = *v.grid();
    if let Some(&bad) = start_nodes.iter().find(|&&i| i >= grid.len()) {
        return Err(Error::InvalidArgument(format!("start node {bad} outside grid")));
    }
    if batches == 0 {
        return Err(Error::InvalidArgument("batches must be at least 1".into()));
    }
    let gv = gradient(v, BoundaryCondition::DirichletZero);
    let gtab = DriftTable::new(&gv);
    let btab = DriftTable::new(b);
    let dt = cfg.dt;
    let ds = dt / tau;
    let steps = (s_max / ds).ceil() as usize;
    let sigma = (2.0 * cfg.nu * dt).sqrt();
    let decay = (-ds).exp();

    let path_integral = |node: usize, path: usize| -> f64 {
        let mut rng = path_rng(cfg.seed, ((node as u64) << 32) | path as u64);
        let mut x = grid.x(node);
        let mut weight = 1.0;
        let mut acc = 0.5 * gtab.at(x);
        for k in 1..=steps {
            let z: f64 = rng.sample(StandardNormal);
            x = btab.reflect(x + btab.at(x) * dt + sigma * z);
            weight *= decay;
            let term = weight * gtab.at(x);
            acc += if k == steps { 0.5 * term } else { term };
        }
        acc * ds
    };

    let pairs: Vec<(usize, usize)> = start_nodes
        .iter()
        .flat_map(|&node| (0..cfg.n_paths).map(move |p| (node, p)))
        .collect();
    let samples: Vec<f64> = pairs.par_iter().map(|&(node, p)| path_integral(node, p)).collect();

    let nb = batches.min(cfg.n_paths);
    let mut values = Vec::with_capacity(start_nodes.len());
    let mut stderr = Vec::with_capacity(start_nodes.len());
    for chunk in samples.chunks(cfg.n_paths) {
        let mean = neumaier_sum(chunk.iter().copied()) / chunk.len() as f64;
        values.push(-mean);
        stderr.push(batch_stderr(chunk, nb));
    }
    Ok(ForceEstimate {
        grid,
        nodes: start_nodes.to_vec(),
        values,
        stderr,
        method: ForceMethod::MonteCarlo,
        tau,
        s_quadrature: format!("trapezoid ds={ds:e} to s_max={s_max}, {nb} batches"),
        external_force: start_nodes.iter().map(|&i| -gv.values()[i]).collect(),
    })
}

/// Standard error of the mean from `nb` contiguous batch means.
fn batch_stderr(samples: &[f64], nb: usize) -> f64 {
    if nb < 2 {
        return 0.0;
    }
    let n = samples.len();
    let means: Vec<f64> = (0..nb)
        .map(|k| {
            let (lo, hi) = (k * n / nb, (k + 1) * n / nb);
            neumaier_sum(samples[lo..hi].iter().copied()) / (hi - lo) as f64
        })
        .collect();
    let grand = neumaier_sum(means.iter().copied()) / nb as f64;
    let var = neumaier_sum(means.iter().map(|m| (m - grand).powi(2))) / (nb - 1) as f64;
    (var / nb as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsReport {
    /// `‖kT ∇ln ρ - F‖ / ‖∇V‖` over masked evaluated nodes.
    pub relative_residual: f64,
    /// Largest `|kT ∇ln ρ - F| / stderr` (Monte Carlo estimates only).
    pub max_stderr_units: Option<f64>,
    pub nodes_checked: usize,
}

/// Test `kT ∇ ln ρ = F` at the evaluated nodes inside the shared mask.
pub fn check_gibbs_relation(rho: &ScalarField, f: &ForceEstimate, kt: f64) -> Result<GibbsReport> {
    if rho.grid() != &f.grid {
        return Err(Error::InvalidArgument("density and force live on different grids".into()));
    }
    let r = log_density(rho, BoundaryCondition::DirichletZero)?;
    let grad = gradient(&r, BoundaryCondition::DirichletZero);
    let mask = interior_mask(rho);
    let mut res = Vec::new();
    let mut ext = Vec::new();
    let mut z: Option<f64> = None;
    for (k, &i) in f.nodes.iter().enumerate() {
        if !mask[i] {
            continue;
        }
        let d = 2.0 * kt * grad.values()[i] - f.values[k];
        res.push(d * d);
        ext.push(f.external_force[k].powi(2));
        if f.method == ForceMethod::MonteCarlo && f.stderr[k] > 0.0 {
            let u = d.abs() / f.stderr[k];
            z = Some(z.map_or(u, |m| m.max(u)));
        }
    }
    Ok(GibbsReport {
        relative_residual: (neumaier_sum(res.iter().copied()) / neumaier_sum(ext)).sqrt(),
        max_stderr_units: z,
        nodes_checked: res.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    /// `‖[1 - τ(b ∂ + ν ∂²)] F + ∇V‖ / ‖∇V‖` over the mask.
    pub relative_residual: f64,
    pub nodes_checked: usize,
}

/// Test `[1 - τ(b·∇ + νΔ)] F = -∇V`. The mask is built from the stationary
/// density implied by the drift, so no separate density is needed.
pub fn check_operator_identity(
    f: &ForceEstimate,
    b: &ScalarField,
    nu: f64,
    tau: f64,
    v: &ScalarField,
) -> Result<IdentityReport> {
    let field = f
        .field()
        .ok_or_else(|| Error::InvalidArgument("operator identity needs the force at every node".into()))?;
    check_same_grid(v, b)?;
    if b.grid() != &f.grid {
        return Err(Error::InvalidArgument("force and drift live on different grids".into()));
    }
    let bc = BoundaryCondition::DirichletZero;
    let df = gradient(&field, bc);
    let d2f = laplacian(&field, bc);
    let gv = gradient(v, bc);
    let mask = interior_mask(&stationary_density_from_drift(b, nu)?);
    let mut num = Vec::new();
    let mut den = Vec::new();
    for i in (0..field.len()).filter(|&i| mask[i]) {
        let lf = b.values()[i] * df.values()[i] + nu * d2f.values()[i];
        let r = field.values()[i] - tau * lf + gv.values()[i];
        num.push(r * r);
        den.push(gv.values()[i].powi(2));
    }
    Ok(IdentityReport {
        relative_residual: (neumaier_sum(num.iter().copied()) / neumaier_sum(den)).sqrt(),
        nodes_checked: num.len(),
    })
}

/// `V_extra = -γ Δρ^{1/2} / ρ^{1/2}`.
pub fn extra_potential(rho: &ScalarField, gamma: f64, bc: BoundaryCondition) -> Result<ScalarField> {
    curvature_ratio(rho, bc)?.map(FieldRole::Potential, |c| -gamma * c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::build_grid;
    use crate::reference::ou_force;
    use crate::stationary::{classical_gibbs, quantum_potential};

    fn sde(dt: f64, n_paths: usize, nu: f64) -> SdeConfig {
        SdeConfig {
            dt,
            n_steps: 1,
            n_paths,
            burn_in: 0,
            seed: 11,
            nu,
            sample_every: 1,
            log_increments: false,
        }
    }

    fn ou_setup(n: usize) -> (ScalarField, ScalarField) {
        let g = build_grid(-8.0, 8.0, n).unwrap();
        let v = ScalarField::from_fn(g, FieldRole::Potential, |x| 0.5 * x * x).unwrap();
        let b = ScalarField::from_fn(g, FieldRole::Drift, |x| -x).unwrap();
        (v, b)
    }

    #[test]
    fn small_tau_recovers_external_force() {
        let (v, b) = ou_setup(201);
        let nu = 0.5;
        let h = v.grid().spacing();
        let tau = 1e-8 * h * h / nu;
        let f = force_kernel(&v, &b, nu, tau, 20.0, 16, None).unwrap();
        for (fv, e) in f.values.iter().zip(&f.external_force) {
            assert!((fv - e).abs() <= 1e-6 * (1.0 + e.abs()));
        }
    }

    #[test]
    fn linear_potential_gives_constant_force() {
        let g = build_grid(-4.0, 4.0, 161).unwrap();
        let v = ScalarField::from_fn(g, FieldRole::Potential, |x| 0.7 * x).unwrap();
        let b = ScalarField::from_fn(g, FieldRole::Drift, |x| -x).unwrap();
        let f = force_kernel(&v, &b, 0.5, 1.3, 20.0, 16, None).unwrap();
        for fv in &f.values {
            assert!((fv + 0.7).abs() < 1e-12, "{fv}");
        }
        let mc = force_monte_carlo(&v, &b, &sde(1e-2, 200, 0.5), 1.3, 15.0, &[40, 80]).unwrap();
        // Trapezoid error in s is about ds²/12 relative.
        let ds: f64 = 1e-2 / 1.3;
        for (fv, se) in mc.values.iter().zip(&mc.stderr) {
            assert!((fv + 0.7).abs() < 0.7 * (ds * ds / 12.0 + 1e-6), "{fv}");
            assert!(*se < 1e-12);
        }
    }

    #[test]
    fn ou_kernel_matches_closed_form_and_identity() {
        let (v, b) = ou_setup(512);
        let (nu, tau) = (0.5, 0.5);
        let f = force_kernel(&v, &b, nu, tau, 20.0, 16, None).unwrap();
        let g = v.grid();
        let mut worst = 0.0_f64;
        for i in 0..g.len() {
            let x = g.x(i);
            if x.abs() <= 2.0 {
                let exact = ou_force(x, 0.5, 2.0 * nu, tau);
                worst = worst.max((f.values[i] - exact).abs() / (1.0 + exact.abs()));
            }
        }
        assert!(worst < 1e-3, "{worst}");
        let id = check_operator_identity(&f, &b, nu, tau, &v).unwrap();
        assert!(id.relative_residual < 2e-2, "{id:?}");
        let mut broken = f.clone();
        for (k, val) in broken.values.iter_mut().enumerate() {
            *val += 0.01 * g.x(k).powi(2);
        }
        let bad = check_operator_identity(&broken, &b, nu, tau, &v).unwrap();
        assert!(bad.relative_residual >= 10.0 * id.relative_residual);
    }

    #[test]
    fn monte_carlo_agrees_with_kernel() {
        let (v, b) = ou_setup(256);
        let (nu, tau) = (0.5, 0.5);
        let kern = force_kernel(&v, &b, nu, tau, 20.0, 16, None).unwrap();
        let nodes = [64, 110, 128, 150, 190];
        let mc = force_monte_carlo(&v, &b, &sde(5e-3, 2000, nu), tau, 15.0, &nodes).unwrap();
        for (k, &i) in nodes.iter().enumerate() {
            let diff = (mc.values[k] - kern.values[i]).abs();
            assert!(diff <= 3.0 * mc.stderr[k] + 2e-3, "node {i}: {diff} vs {}", mc.stderr[k]);
            assert!(mc.stderr[k] > 0.0);
        }
        // Deterministic for a fixed seed.
        let again = force_monte_carlo(&v, &b, &sde(5e-3, 2000, nu), tau, 15.0, &nodes).unwrap();
        assert_eq!(mc, again);
    }

    #[test]
    fn monte_carlo_preconditions() {
        let (v, b) = ou_setup(101);
        assert!(force_monte_carlo(&v, &b, &sde(1e-3, 0, 0.5), 0.5, 15.0, &[50]).is_err());
        assert!(matches!(
            force_monte_carlo(&v, &b, &sde(0.1, 10, 0.5), 0.5, 15.0, &[50]),
            Err(Error::StepResolution { .. })
        ));
        assert!(matches!(
            force_kernel(&v, &b, 0.5, 0.5, 5.0, 16, None),
            Err(Error::QuadratureBudget { .. })
        ));
        assert!(force_kernel(&v, &b, 0.5, 0.0, 20.0, 16, None).is_err());
    }

    #[test]
    fn gibbs_relation_small_tau_classical() {
        let g = build_grid(-3.0, 3.0, 601).unwrap();
        let v = ScalarField::from_fn(g, FieldRole::Potential, |x| (x * x - 1.0).powi(2)).unwrap();
        let kt = 0.5;
        let nu = 0.5;
        let rho = classical_gibbs(&v, kt).unwrap();
        let b = crate::diffusion::drift_from_density(&rho, nu, BoundaryCondition::DirichletZero).unwrap();
        let tau = 1e-8 * g.spacing().powi(2) / nu;
        let f = force_kernel(&v, &b, nu, tau, 20.0, 16, None).unwrap();
        let r = check_gibbs_relation(&rho, &f, kt).unwrap();
        assert!(r.relative_residual <= 1e-4, "{r:?}");
        assert!(r.max_stderr_units.is_none());
    }

    #[test]
    fn extra_potential_identities() {
        let g = build_grid(-5.0, 5.0, 1001).unwrap();
        let alpha = 0.8;
        let rho = ScalarField::normalized_density(g, g.nodes().iter().map(|x| (-alpha * x * x).exp()).collect())
            .unwrap();
        let (hbar, m) = (1.3, 0.7);
        let gamma = hbar * hbar / (2.0 * m);
        let ve = extra_potential(&rho, gamma, BoundaryCondition::DirichletZero).unwrap();
        let vq = quantum_potential(&rho, hbar, m, BoundaryCondition::DirichletZero).unwrap();
        for (a, b) in ve.values().iter().zip(vq.values()) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
        for i in 1..g.len() - 1 {
            let x = g.x(i);
            let exact = -gamma * (alpha * alpha * x * x - alpha);
            assert!((ve.values()[i] - exact).abs() < 2e-3 * (1.0 + exact.abs()));
        }
        let flat = ScalarField::normalized_density(g, vec![1.0; 1001]).unwrap();
        let z = extra_potential(&flat, gamma, BoundaryCondition::Periodic).unwrap();
        assert!(z.max_abs() < 1e-9);
    }

    #[test]
    fn batch_stderr_of_constant_is_zero() {
        assert_eq!(batch_stderr(&[2.0; 100], 10), 0.0);
        let xs: Vec<f64> = (0..1000).map(|i| (i % 2) as f64).collect();
        // Alternating 0/1 within batches of 100: every batch mean is 0.5.
        assert!(batch_stderr(&xs, 10) < 1e-15);
    }
}
