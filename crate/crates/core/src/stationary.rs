//! Stationary states: the classical Gibbs density, the quantum potential,
//! the linear Schrödinger ladder and the finite-temperature
//! log-Schrödinger ground state
//!
//! ```text
//! [-γ Δ + V + kT ln ρ] ψ = λ ψ,   ρ = ψ²,   ∫ρ = 1
//! ```
//!
//! All solvers work on the interior nodes of a Dirichlet box; the boundary
//! nodes carry ψ = 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{interior_mask, laplacian, neumaier_sum, BoundaryCondition, FieldRole, Grid1D, ScalarField};
use crate::tridiag::{thomas, SymTridiag, TridiagLu};

/// ψ is clamped here during iteration so `ln ρ` stays finite.
pub const PSI_FLOOR: f64 = 1e-150;

/// Linear or nonlinear stationary state.
#[derive(Debug, Clone)]
pub struct EigenSolution {
    pub lambda: f64,
    /// Real amplitude; positive for ground states, signed for linear excited states.
    pub psi: ScalarField,
    pub rho: ScalarField,
    /// `R = ½ ln ρ`; `None` when the state has nodes.
    pub log_density: Option<ScalarField>,
    pub residual: f64,
    pub iterations: usize,
    pub kt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialGuess {
    /// Lower-energy of the linear ground state and the classical Gibbs density.
    Auto,
    /// Lowest box mode `sin(π (x - x_min) / L)`, independent of `V`.
    Box,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    /// Target for the discrete residual `‖Hψ - λψ‖`.
    pub tol: f64,
    pub max_iterations: usize,
    /// Initial imaginary-time step.
    pub dtau: f64,
    pub dtau_max: f64,
    /// Residual below which Newton refinement takes over (kT > 0 only).
    pub newton_switch: f64,
    pub newton: bool,
    pub initial_guess: InitialGuess,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iterations: 2000,
            dtau: 1.0,
            dtau_max: 1e8,
            newton_switch: 1e-3,
            newton: true,
            initial_guess: InitialGuess::Auto,
        }
    }
}

/// Normalized `exp(-V / kT)`.
///
/// The exponent is shifted by `min V` before exponentiation; the
/// normalized result is shift-invariant.
pub fn classical_gibbs(v: &ScalarField, kt: f64) -> Result<ScalarField> {
    if !(kt > 0.0 && kt.is_finite()) {
        return Err(Error::NonPositive { name: "kT", value: kt });
    }
    let vmin = v.values().iter().cloned().fold(f64::INFINITY, f64::min);
    let w = v.values().iter().map(|&x| (-(x - vmin) / kt).exp()).collect();
    ScalarField::normalized_density(*v.grid(), w)
}

fn check_interior_positive(rho: &ScalarField, bc: BoundaryCondition) -> Result<()> {
    let n = rho.len();
    let range = match bc {
        BoundaryCondition::DirichletZero => 1..n - 1,
        BoundaryCondition::Periodic => 0..n,
    };
    for i in range {
        if !(rho.values()[i] > 0.0) {
            return Err(Error::NodeAtZero {
                index: i,
                x: rho.grid().x(i),
            });
        }
    }
    Ok(())
}

/// `Δ ρ^{1/2} / ρ^{1/2}`. Boundary nodes where ρ vanishes copy their
/// interior neighbour.
pub(crate) fn curvature_ratio(rho: &ScalarField, bc: BoundaryCondition) -> Result<ScalarField> {
    check_interior_positive(rho, bc)?;
    let amp = rho.map(FieldRole::Generic, f64::sqrt)?;
    let lap = laplacian(&amp, bc);
    let n = rho.len();
    let mut out: Vec<f64> = (0..n)
        .map(|i| {
            let a = amp.values()[i];
            if a > 0.0 {
                lap.values()[i] / a
            } else {
                f64::NAN
            }
        })
        .collect();
    if out[0].is_nan() {
        out[0] = out[1];
    }
    if out[n - 1].is_nan() {
        out[n - 1] = out[n - 2];
    }
    ScalarField::new(*rho.grid(), out, FieldRole::Potential)
}

/// `V_QM = -(ħ²/2m) Δρ^{1/2} / ρ^{1/2}`.
pub fn quantum_potential(rho: &ScalarField, hbar: f64, m: f64, bc: BoundaryCondition) -> Result<ScalarField> {
    let scale = hbar * hbar / (2.0 * m);
    curvature_ratio(rho, bc)?.map(FieldRole::Potential, |c| -scale * c)
}

/// `R = ½ ln ρ`. Vanishing Dirichlet boundary values are replaced by
/// quadratic extrapolation from the interior.
pub fn log_density(rho: &ScalarField, bc: BoundaryCondition) -> Result<ScalarField> {
    check_interior_positive(rho, bc)?;
    let n = rho.len();
    let mut r: Vec<f64> = rho.values().iter().map(|&p| if p > 0.0 { 0.5 * p.ln() } else { f64::NAN }).collect();
    if r[0].is_nan() {
        r[0] = if n >= 4 { 3.0 * r[1] - 3.0 * r[2] + r[3] } else { r[1] };
    }
    if r[n - 1].is_nan() {
        r[n - 1] = if n >= 4 {
            3.0 * r[n - 2] - 3.0 * r[n - 3] + r[n - 4]
        } else {
            r[n - 2]
        };
    }
    ScalarField::new(*rho.grid(), r, FieldRole::LogDensity)
}

/// Discretized `-γΔ + V (+ kT ln ψ²)` on the interior nodes.
struct Problem {
    grid: Grid1D,
    /// Potential on interior nodes.
    v: Vec<f64>,
    gamma: f64,
    kt: f64,
}

impl Problem {
    fn new(v: &ScalarField, gamma: f64, kt: f64) -> Self {
        let n = v.len();
        Self {
            grid: *v.grid(),
            v: v.values()[1..n - 1].to_vec(),
            gamma,
            kt,
        }
    }

    fn h(&self) -> f64 {
        self.grid.spacing()
    }

    fn m(&self) -> usize {
        self.v.len()
    }

    fn kinetic(&self) -> (f64, f64) {
        let h2 = self.h() * self.h();
        (2.0 * self.gamma / h2, -self.gamma / h2)
    }

    fn log_term(&self, psi: f64) -> f64 {
        if self.kt == 0.0 {
            0.0
        } else {
            self.kt * (psi.max(PSI_FLOOR).powi(2)).ln()
        }
    }

    /// Hamiltonian with the logarithmic term frozen at `psi`.
    fn frozen(&self, psi: &[f64]) -> SymTridiag {
        let (d, o) = self.kinetic();
        SymTridiag {
            diag: self.v.iter().zip(psi).map(|(v, &p)| d + v + self.log_term(p)).collect(),
            off: vec![o; self.m() - 1],
        }
    }

    fn linear(&self) -> SymTridiag {
        let (d, o) = self.kinetic();
        SymTridiag {
            diag: self.v.iter().map(|v| d + v).collect(),
            off: vec![o; self.m() - 1],
        }
    }

    fn norm2(&self, psi: &[f64]) -> f64 {
        self.h() * neumaier_sum(psi.iter().map(|p| p * p))
    }

    fn normalize(&self, psi: &mut [f64]) {
        let s = self.norm2(psi).sqrt();
        psi.iter_mut().for_each(|p| *p /= s);
    }

    /// Rayleigh quotient and residual norm of the full nonlinear operator.
    fn evaluate(&self, psi: &[f64]) -> (f64, f64, Vec<f64>) {
        let hk = self.frozen(psi);
        let mut hpsi = vec![0.0; self.m()];
        hk.apply(psi, &mut hpsi);
        let h = self.h();
        let num = h * neumaier_sum(psi.iter().zip(&hpsi).map(|(a, b)| a * b));
        let lambda = num / self.norm2(psi);
        let r: Vec<f64> = hpsi.iter().zip(psi).map(|(hp, p)| hp - lambda * p).collect();
        let res = (h * neumaier_sum(r.iter().map(|x| x * x))).sqrt();
        (lambda, res, r)
    }

    /// Discrete energy `∫ γ ψ'² + V ψ² + kT ψ² ln ψ²`, whose constrained
    /// critical points solve the nonlinear equation.
    fn energy(&self, psi: &[f64]) -> f64 {
        let h = self.h();
        let m = self.m();
        let grad = neumaier_sum((0..=m).map(|e| {
            let l = if e == 0 { 0.0 } else { psi[e - 1] };
            let r = if e == m { 0.0 } else { psi[e] };
            (r - l) * (r - l)
        }));
        let pot = neumaier_sum(self.v.iter().zip(psi).map(|(v, &p)| (v + self.log_term(p)) * p * p));
        self.gamma * grad / h + h * pot
    }

    fn clamp(&self, psi: &mut [f64]) {
        psi.iter_mut().for_each(|p| *p = p.max(PSI_FLOOR));
    }

    fn full(&self, psi: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(psi.len() + 2);
        out.push(0.0);
        out.extend_from_slice(psi);
        out.push(0.0);
        out
    }
}

/// Nodeless check: nodes above the mask floor must form one contiguous run,
/// and no raw value inside that run may have dropped to the positivity floor.
fn check_nodeless(grid: &Grid1D, psi: &[f64]) -> Result<()> {
    let above: Vec<usize> = (0..psi.len()).filter(|&i| psi[i] * psi[i] >= crate::fields::MASK_DENSITY_FLOOR).collect();
    if let (Some(&first), Some(&last)) = (above.first(), above.last()) {
        for (i, &p) in psi.iter().enumerate().take(last).skip(first) {
            if p * p < crate::fields::MASK_DENSITY_FLOOR {
                return Err(Error::NodeCollapse {
                    index: i + 1,
                    x: grid.x(i + 1),
                });
            }
        }
    }
    Ok(())
}

fn validate_potential(v: &ScalarField) -> Result<()> {
    if v.len() < 4 {
        return Err(Error::TooFewNodes(v.len()));
    }
    Ok(())
}

/// Lowest `n_states` eigenpairs of `-(ħ²/2m) Δ + V` with Dirichlet walls.
pub fn solve_linear_ground(v: &ScalarField, hbar: f64, m: f64, n_states: usize) -> Result<Vec<EigenSolution>> {
    validate_potential(v)?;
    if !(hbar > 0.0) {
        return Err(Error::NonPositive { name: "hbar", value: hbar });
    }
    if !(m > 0.0) {
        return Err(Error::NonPositive { name: "mass", value: m });
    }
    let prob = Problem::new(v, hbar * hbar / (2.0 * m), 0.0);
    let n_states = n_states.min(prob.m());
    let op = prob.linear();
    let mut found: Vec<Vec<f64>> = Vec::with_capacity(n_states);
    let mut out = Vec::with_capacity(n_states);
    for k in 0..n_states {
        let lambda = op.eigenvalue(k);
        let (mut vec, iterations) = op.eigenvector(lambda, &found, 50)?;
        // Sign convention: first significant lobe positive.
        let peak = vec.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
        if let Some(first) = vec.iter().find(|x| x.abs() > 1e-3 * peak) {
            if *first < 0.0 {
                vec.iter_mut().for_each(|x| *x = -*x);
            }
        }
        found.push(vec.clone());
        let mut psi = vec;
        prob.normalize(&mut psi);
        if k == 0 {
            prob.clamp(&mut psi);
            prob.normalize(&mut psi);
        }
        let (rq, residual, _) = prob.evaluate(&psi);
        out.push(package(&prob, &psi, rq, residual, iterations, k == 0)?);
    }
    Ok(out)
}

fn package(
    prob: &Problem,
    psi: &[f64],
    lambda: f64,
    residual: f64,
    iterations: usize,
    nodeless: bool,
) -> Result<EigenSolution> {
    let full = prob.full(psi);
    let rho_vals: Vec<f64> = full.iter().map(|p| p * p).collect();
    let rho = ScalarField::new(prob.grid, rho_vals, FieldRole::Density)?;
    let log_density = if nodeless {
        Some(log_density(&rho, BoundaryCondition::DirichletZero)?)
    } else {
        None
    };
    Ok(EigenSolution {
        lambda,
        psi: ScalarField::new(prob.grid, full, FieldRole::Generic)?,
        rho,
        log_density,
        residual,
        iterations,
        kt: prob.kt,
    })
}

/// Ground state of `[-γΔ + V + kT ln ρ] ψ = λψ`.
///
/// Normalized imaginary-time propagation with the logarithmic term frozen
/// per step (backward Euler, energy reference at the frozen operator's
/// lowest eigenvalue, step size adapted on energy decrease), followed by
/// Newton refinement on the bordered system once the residual is small.
/// λ is the Rayleigh quotient of the full operator at the converged ψ.
pub fn solve_log_nlse_ground(v: &ScalarField, gamma: f64, kt: f64, opts: &SolverOptions) -> Result<EigenSolution> {
    validate_potential(v)?;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::NonPositive { name: "gamma", value: gamma });
    }
    if !(kt >= 0.0 && kt.is_finite()) {
        return Err(Error::InvalidArgument(format!("kT must be nonnegative, got {kt}")));
    }
    let prob = Problem::new(v, gamma, kt);
    let mut psi = initial_guess(&prob, v, opts)?;
    let mut energy = prob.energy(&psi);
    let (mut lambda, mut residual, mut r) = prob.evaluate(&psi);
    let mut dtau = opts.dtau;
    let mut scratch = Vec::new();
    let mut iterations = 0;
    let mut newton_failures = 0;
    while residual > opts.tol {
        if iterations >= opts.max_iterations {
            return Err(Error::Convergence {
                iterations,
                residual,
                tolerance: opts.tol,
            });
        }
        iterations += 1;

        if opts.newton && kt > 0.0 && residual < opts.newton_switch && newton_failures < 3 {
            match newton_step(&prob, &psi, lambda, &r, residual)? {
                Some(next) => {
                    psi = next;
                    check_nodeless(&prob.grid, &psi)?;
                    energy = prob.energy(&psi);
                    (lambda, residual, r) = prob.evaluate(&psi);
                    continue;
                }
                None => newton_failures += 1,
            }
        }

        let hk = prob.frozen(&psi);
        let mu = hk.eigenvalue(0);
        let shift = 1.0 / dtau;
        let m = prob.m();
        let mut sub = vec![hk.off[0]; m];
        let mut sup = vec![hk.off[0]; m];
        sub[0] = 0.0;
        sup[m - 1] = 0.0;
        let diag: Vec<f64> = hk.diag.iter().map(|d| d - mu + shift).collect();
        let mut next: Vec<f64> = psi.iter().map(|p| p * shift).collect();
        thomas(&sub, &diag, &sup, &mut next, &mut scratch);
        if let Some(i) = next.iter().position(|p| !p.is_finite()) {
            return Err(Error::NodeCollapse {
                index: i + 1,
                x: prob.grid.x(i + 1),
            });
        }
        check_nodeless(&prob.grid, &next)?;
        prob.clamp(&mut next);
        prob.normalize(&mut next);
        let e_next = prob.energy(&next);
        if e_next > energy + 1e-14 * energy.abs().max(1.0) && kt > 0.0 {
            dtau *= 0.25;
            if dtau < 1e-12 {
                return Err(Error::Convergence {
                    iterations,
                    residual,
                    tolerance: opts.tol,
                });
            }
            continue;
        }
        psi = next;
        energy = e_next;
        dtau = (dtau * 2.0).min(opts.dtau_max);
        (lambda, residual, r) = prob.evaluate(&psi);
    }
    check_nodeless(&prob.grid, &psi)?;
    package(&prob, &psi, lambda, residual, iterations, true)
}

fn initial_guess(prob: &Problem, v: &ScalarField, opts: &SolverOptions) -> Result<Vec<f64>> {
    let m = prob.m();
    let mut candidates: Vec<Vec<f64>> = Vec::new();
    match opts.initial_guess {
        InitialGuess::Box => {
            candidates.push(
                (1..=m)
                    .map(|i| (std::f64::consts::PI * i as f64 / (m + 1) as f64).sin())
                    .collect(),
            );
        }
        InitialGuess::Auto => {
            let op = prob.linear();
            let (lin, _) = op.eigenvector(op.eigenvalue(0), &[], 50)?;
            candidates.push(lin.iter().map(|x| x.abs()).collect());
            if prob.kt > 0.0 {
                let gibbs = classical_gibbs(v, prob.kt)?;
                candidates.push(gibbs.values()[1..m + 1].iter().map(|p| p.sqrt()).collect());
            }
        }
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mut c in candidates {
        prob.clamp(&mut c);
        prob.normalize(&mut c);
        let e = prob.energy(&c);
        if best.as_ref().map_or(true, |(be, _)| e < *be) {
            best = Some((e, c));
        }
    }
    Ok(best.expect("at least one candidate").1)
}

/// One damped Newton step on `F(ψ, λ) = (Hψ - λψ, ½(‖ψ‖² - 1))`.
/// Returns `None` if no step length reduces the residual.
fn newton_step(prob: &Problem, psi: &[f64], lambda: f64, r: &[f64], residual: f64) -> Result<Option<Vec<f64>>> {
    let m = prob.m();
    let hk = prob.frozen(psi);
    let diag: Vec<f64> = hk
        .diag
        .iter()
        .zip(psi)
        .map(|(d, &p)| d + if p > PSI_FLOOR { 2.0 * prob.kt } else { 0.0 } - lambda)
        .collect();
    let mut sub = vec![hk.off[0]; m];
    let mut sup = vec![hk.off[0]; m];
    sub[0] = 0.0;
    sup[m - 1] = 0.0;
    let lu = TridiagLu::new(&sub, &diag, &sup)?;
    let mut u = r.to_vec();
    lu.solve(&mut u);
    let mut w = psi.to_vec();
    lu.solve(&mut w);
    let h = prob.h();
    let f2 = 0.5 * (prob.norm2(psi) - 1.0);
    let pu = h * neumaier_sum(psi.iter().zip(&u).map(|(a, b)| a * b));
    let pw = h * neumaier_sum(psi.iter().zip(&w).map(|(a, b)| a * b));
    if !(pw.abs() > 0.0) || !pu.is_finite() {
        return Ok(None);
    }
    let dl = (pu - f2) / pw;
    let step: Vec<f64> = u.iter().zip(&w).map(|(u, w)| -u + dl * w).collect();
    let mut scale = 1.0;
    for _ in 0..6 {
        let mut trial: Vec<f64> = psi.iter().zip(&step).map(|(p, s)| p + scale * s).collect();
        prob.clamp(&mut trial);
        prob.normalize(&mut trial);
        let (_, res, _) = prob.evaluate(&trial);
        if res < residual {
            return Ok(Some(trial));
        }
        scale *= 0.5;
    }
    Ok(None)
}

/// Pointwise stationary balance `V + V_extra + kT ln ρ - λ` on the shared mask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub max_abs: f64,
    pub index: usize,
    pub x: f64,
    pub nodes_checked: usize,
}

/// Max interior `|V + V_extra + kT ln ρ - λ|` with `V_extra = -γ Δρ^{1/2}/ρ^{1/2}`.
pub fn verify_stationary_decomposition(sol: &EigenSolution, v: &ScalarField, gamma: f64) -> Result<BalanceReport> {
    let curv = curvature_ratio(&sol.rho, BoundaryCondition::DirichletZero)?;
    let mask = interior_mask(&sol.rho);
    let mut report = BalanceReport {
        max_abs: 0.0,
        index: 0,
        x: sol.rho.grid().x(0),
        nodes_checked: 0,
    };
    for i in 0..sol.rho.len() {
        if !mask[i] {
            continue;
        }
        let log_term = if sol.kt == 0.0 { 0.0 } else { sol.kt * sol.rho.values()[i].ln() };
        let balance = v.values()[i] - gamma * curv.values()[i] + log_term - sol.lambda;
        report.nodes_checked += 1;
        if balance.abs() > report.max_abs || report.nodes_checked == 1 {
            report.max_abs = balance.abs();
            report.index = i;
            report.x = sol.rho.grid().x(i);
        }
    }
    Ok(report)
}

/// Density rebuilt from the Gibbs-like form
/// `ρ = exp(-(V - γ Δρ^{1/2}/ρ^{1/2} - λ) / kT)`, node by node.
pub fn gibbs_form_density(sol: &EigenSolution, v: &ScalarField, gamma: f64) -> Result<Vec<f64>> {
    if !(sol.kt > 0.0) {
        return Err(Error::NonPositive { name: "kT", value: sol.kt });
    }
    let curv = curvature_ratio(&sol.rho, BoundaryCondition::DirichletZero)?;
    Ok(v.values()
        .iter()
        .zip(curv.values())
        .map(|(vv, c)| (-(vv - gamma * c - sol.lambda) / sol.kt).exp())
        .collect())
}

/// Extract α from the second moment, assuming a centred Gaussian `ρ ∝ e^{-αx²}`.
pub fn gaussian_alpha(rho: &ScalarField) -> f64 {
    let g = rho.grid();
    let second = crate::fields::trapezoid(
        g,
        &rho.values().iter().enumerate().map(|(i, p)| g.x(i).powi(2) * p).collect::<Vec<_>>(),
    );
    0.5 / second
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{build_grid, gradient, masked_relative_l2};
    use crate::reference::Gausson;

    fn harmonic(n: usize, l: f64) -> ScalarField {
        let g = build_grid(-l, l, n).unwrap();
        ScalarField::from_fn(g, FieldRole::Potential, |x| 0.5 * x * x).unwrap()
    }

    #[test]
    fn gibbs_of_harmonic_is_gaussian() {
        let v = harmonic(801, 8.0);
        let rho = classical_gibbs(&v, 0.5).unwrap();
        // exp(-x²) has variance 0.5.
        let var = 0.5 / gaussian_alpha(&rho);
        assert!((var - 0.5).abs() < 1e-6, "{var}");
    }

    #[test]
    fn gibbs_of_constant_is_uniform() {
        let g = build_grid(0.0, 2.0, 41).unwrap();
        let v = ScalarField::from_fn(g, FieldRole::Potential, |_| 3.0).unwrap();
        let rho = classical_gibbs(&v, 0.7).unwrap();
        for p in rho.values() {
            assert!((p - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn gibbs_double_well_satisfies_boltzmann_balance() {
        let g = build_grid(-2.5, 2.5, 1001).unwrap();
        let v = ScalarField::from_fn(g, FieldRole::Potential, |x| (x * x - 1.0).powi(2)).unwrap();
        let kt = 0.2;
        let rho = classical_gibbs(&v, kt).unwrap();
        assert!((rho.integral() - 1.0).abs() < 1e-12);
        // Bimodal: the density at the wells exceeds the barrier value.
        let at = |x: f64| rho.interpolate(x);
        assert!(at(1.0) > 10.0 * at(0.0) && at(-1.0) > 10.0 * at(0.0));
        let lhs = gradient(&rho.map(FieldRole::Generic, f64::ln).unwrap(), BoundaryCondition::DirichletZero);
        let rhs = gradient(&v, BoundaryCondition::DirichletZero);
        let diff: Vec<f64> = lhs.values().iter().zip(rhs.values()).map(|(a, b)| kt * a + b).collect();
        let mask = vec![true; g.len()];
        assert!(masked_relative_l2(&diff, rhs.values(), &mask) < 1e-6);
    }

    #[test]
    fn gibbs_survives_huge_exponents() {
        let g = build_grid(-10.0, 10.0, 201).unwrap();
        let v = ScalarField::from_fn(g, FieldRole::Potential, |x| 1e4 + x * x).unwrap();
        let rho = classical_gibbs(&v, 1e-2).unwrap();
        assert!((rho.integral() - 1.0).abs() < 1e-12);
        assert!(classical_gibbs(&v, 0.0).is_err());
    }

    #[test]
    fn quantum_potential_uniform_and_zero() {
        let g = build_grid(0.0, 1.0, 33).unwrap();
        let rho = ScalarField::new(g, vec![1.0; 33], FieldRole::Density).unwrap();
        let q = quantum_potential(&rho, 1.0, 1.0, BoundaryCondition::Periodic).unwrap();
        assert!(q.max_abs() < 1e-9);

        let mut v = vec![1.0; 33];
        v[10] = 0.0;
        let rho = ScalarField::normalized_density(g, v).unwrap();
        assert!(matches!(
            quantum_potential(&rho, 1.0, 1.0, BoundaryCondition::DirichletZero),
            Err(Error::NodeAtZero { index: 10, .. })
        ));
    }

    #[test]
    fn quantum_potential_of_gaussian() {
        let alpha = 1.3;
        let g = build_grid(-5.0, 5.0, 1001).unwrap();
        let rho = ScalarField::normalized_density(g, g.nodes().iter().map(|x| (-alpha * x * x).exp()).collect())
            .unwrap();
        let q = quantum_potential(&rho, 1.0, 1.0, BoundaryCondition::DirichletZero).unwrap();
        // f = e^{-αx²/2}: f''/f = α²x² - α, and the 3-point stencil errs by
        // at most (h²/12) max|f''''| / f over the stencil.
        let h = g.spacing();
        for i in 1..g.len() - 1 {
            let x = g.x(i);
            let exact = -0.5 * (alpha * alpha * x * x - alpha);
            let f = |y: f64| (-0.5 * alpha * y * y).exp();
            let d4 = |y: f64| {
                let a = alpha;
                (a.powi(4) * y.powi(4) - 6.0 * a.powi(3) * y * y + 3.0 * a * a) * f(y)
            };
            let peak = [x - h, x, x + h].iter().map(|&y| d4(y).abs()).fold(0.0, f64::max);
            let bound = 0.5 * h * h / 12.0 * peak / f(x) * 1.05 + 1e-9;
            assert!((q.values()[i] - exact).abs() <= bound, "x={x}");
        }
    }

    #[test]
    fn linear_harmonic_and_box() {
        let v = harmonic(2001, 10.0);
        let states = solve_linear_ground(&v, 1.0, 1.0, 3).unwrap();
        assert!((states[0].lambda - 0.5).abs() < 1e-3);
        assert!((states[1].lambda - 1.5).abs() < 1e-3);
        assert!(states[0].psi.values()[1..2000].iter().all(|p| *p > 0.0));
        assert!(states[0].log_density.is_some() && states[1].log_density.is_none());

        let g = build_grid(0.0, 1.0, 401).unwrap();
        let flat = ScalarField::zeros(g, FieldRole::Potential);
        let states = solve_linear_ground(&flat, 1.0, 1.0, 1).unwrap();
        let exact = std::f64::consts::PI.powi(2) / 2.0;
        assert!((states[0].lambda - exact).abs() < 5e-3);
    }

    #[test]
    fn linear_double_well_against_dense_oracle() {
        let n = 401;
        let g = build_grid(-3.0, 3.0, n).unwrap();
        let v = ScalarField::from_fn(g, FieldRole::Potential, |x| 5.0 * (x * x - 1.0).powi(2)).unwrap();
        let states = solve_linear_ground(&v, 1.0, 1.0, 2).unwrap();
        let m = n - 2;
        let h2 = g.spacing().powi(2);
        let mut dense = nalgebra::DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            dense[(i, i)] = 1.0 / h2 + v.values()[i + 1];
            if i + 1 < m {
                dense[(i, i + 1)] = -0.5 / h2;
                dense[(i + 1, i)] = -0.5 / h2;
            }
        }
        let mut eig: Vec<f64> = nalgebra::SymmetricEigen::new(dense).eigenvalues.iter().cloned().collect();
        eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((states[0].lambda - eig[0]).abs() < 1e-10, "{} vs {}", states[0].lambda, eig[0]);
        assert!((states[1].lambda - eig[1]).abs() < 1e-10);
        // Tunnelling splitting is small compared with the well depth.
        assert!(states[1].lambda - states[0].lambda < 0.5);
    }

    #[test]
    fn nlse_at_zero_temperature_matches_linear() {
        let v = harmonic(2001, 10.0);
        let sol = solve_log_nlse_ground(&v, 0.5, 0.0, &SolverOptions::default()).unwrap();
        let lin = &solve_linear_ground(&v, 1.0, 1.0, 1).unwrap()[0];
        assert!((sol.lambda - 0.5).abs() < 1e-3);
        assert!((sol.lambda - lin.lambda).abs() < 1e-10);
    }

    #[test]
    fn nlse_gausson_from_box_start() {
        let v = harmonic(1001, 10.0);
        let opts = SolverOptions {
            initial_guess: InitialGuess::Box,
            ..SolverOptions::default()
        };
        let sol = solve_log_nlse_ground(&v, 0.5, 0.1, &opts).unwrap();
        let exact = Gausson::new(0.5, 0.1, 0.5);
        assert!(((gaussian_alpha(&sol.rho) - exact.alpha) / exact.alpha).abs() < 1e-3);
        assert!(((sol.lambda - exact.lambda) / exact.lambda).abs() < 1e-3);
        assert!(sol.residual <= 1e-10);
    }

    #[test]
    fn nlse_self_consistent_gibbs_form() {
        let v = harmonic(2001, 10.0);
        let sol = solve_log_nlse_ground(&v, 0.5, 0.1, &SolverOptions::default()).unwrap();
        let rebuilt = gibbs_form_density(&sol, &v, 0.5).unwrap();
        let mask = interior_mask(&sol.rho);
        for i in (0..v.len()).filter(|&i| mask[i]) {
            let rel = (rebuilt[i] - sol.rho.values()[i]).abs() / sol.rho.values()[i];
            assert!(rel < 1e-8, "node {i}: {rel}");
        }
    }

    #[test]
    fn balance_detects_perturbation() {
        let v = harmonic(2001, 10.0);
        let sol = solve_log_nlse_ground(&v, 0.5, 0.1, &SolverOptions::default()).unwrap();
        let base = verify_stationary_decomposition(&sol, &v, 0.5).unwrap();
        assert!(base.max_abs <= 1e-6);
        let g = *v.grid();
        let perturbed: Vec<f64> =
            sol.rho.values().iter().enumerate().map(|(i, p)| p * (1.0 + 0.01 * g.x(i))).collect();
        let mut bad = sol.clone();
        bad.rho = ScalarField::normalized_density(g, perturbed).unwrap();
        let worse = verify_stationary_decomposition(&bad, &v, 0.5).unwrap();
        assert!(worse.max_abs >= 10.0 * base.max_abs.max(1e-12));
    }

    #[test]
    fn nlse_rejects_bad_parameters() {
        let v = harmonic(101, 5.0);
        let o = SolverOptions::default();
        assert!(solve_log_nlse_ground(&v, 0.0, 0.1, &o).is_err());
        assert!(solve_log_nlse_ground(&v, 0.5, -0.1, &o).is_err());
        let tight = SolverOptions {
            max_iterations: 0,
            initial_guess: InitialGuess::Box,
            ..o
        };
        assert!(matches!(
            solve_log_nlse_ground(&v, 0.5, 0.1, &tight),
            Err(Error::Convergence { .. })
        ));
    }

    #[test]
    fn nodeless_check_flags_interior_gap() {
        let g = build_grid(0.0, 1.0, 12).unwrap();
        let mut psi = vec![0.5; 10];
        psi[4] = 0.0;
        assert!(matches!(check_nodeless(&g, &psi), Err(Error::NodeCollapse { index: 5, .. })));
        psi[4] = 0.5;
        psi[0] = 0.0;
        assert!(check_nodeless(&g, &psi).is_ok());
    }
}
