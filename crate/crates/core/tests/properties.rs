//! Statistical and randomized properties that need the public API only.

use std::f64::consts::PI;

use proptest::prelude::*;
use radlab::diffusion::{histogram_of, moments, simulate, InitialCondition, SdeConfig};
use radlab::fields::{build_grid, interior_mask, FieldRole, ScalarField};
use radlab::stationary::{gaussian_alpha, solve_log_nlse_ground, SolverOptions};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    /// Gaussian ground state of `[-γΔ + c x² + kT ln ρ]ψ = λψ`, derived from
    /// `ψ ∝ e^{-αx²/2}`: `γα² + kTα = c` and `λ = γα + (kT/2) ln(α/π)`.
    #[test]
    fn log_nlse_matches_gaussian_ansatz(c in 0.2f64..2.0, kt in 0.02f64..0.3, gamma in 0.1f64..1.0) {
        let g = build_grid(-8.0, 8.0, 1601).unwrap();
        let v = ScalarField::from_fn(g, FieldRole::Potential, |x| c * x * x).unwrap();
        let sol = solve_log_nlse_ground(&v, gamma, kt, &SolverOptions::default()).unwrap();
        let alpha = (-kt + (kt * kt + 4.0 * gamma * c).sqrt()) / (2.0 * gamma);
        let lambda = gamma * alpha + 0.5 * kt * (alpha / PI).ln();
        prop_assert!(((gaussian_alpha(&sol.rho) - alpha) / alpha).abs() < 1e-3);
        prop_assert!((sol.lambda - lambda).abs() < 1e-3 * lambda.abs().max(0.1));
        let mask = interior_mask(&sol.rho);
        let interior = &sol.psi.values()[1..g.len() - 1];
        prop_assert!(interior.iter().all(|&p| p > 0.0));
        prop_assert!(mask.iter().any(|&m| m));
    }
}

fn ou() -> (ScalarField, ScalarField) {
    let g = build_grid(-6.0, 6.0, 601).unwrap();
    let b = ScalarField::from_fn(g, FieldRole::Drift, |x| -x).unwrap();
    let rho = ScalarField::from_fn(g, FieldRole::Density, |x| (-x * x).exp() / PI.sqrt()).unwrap();
    (b, rho)
}

fn histogram_l1(b: &ScalarField, rho: &ScalarField, dt: f64, paths: usize, samples: usize, seed: u64) -> f64 {
    let per_unit = (1.0 / dt).round() as usize;
    let cfg = SdeConfig {
        dt,
        n_steps: per_unit * (5 + samples),
        n_paths: paths,
        burn_in: per_unit * 5,
        seed,
        nu: 0.5,
        sample_every: per_unit,
        log_increments: false,
    };
    let batch = simulate(b, &cfg, &InitialCondition::Point(0.0)).unwrap();
    let hg = build_grid(-6.0, 6.0, 61).unwrap();
    histogram_of(&batch.sample_positions, &hg).unwrap().l1_to(rho)
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

#[test]
fn histogram_error_is_insensitive_to_halving_dt() {
    let (b, rho) = ou();
    let coarse: Vec<f64> = (0..6).map(|s| histogram_l1(&b, &rho, 0.01, 200, 100, s)).collect();
    let fine: Vec<f64> = (0..6).map(|s| histogram_l1(&b, &rho, 0.005, 200, 100, 100 + s)).collect();
    let (mc, sc) = mean_se(&coarse);
    let (mf, sf) = mean_se(&fine);
    let bar = 3.0 * (sc * sc + sf * sf).sqrt();
    assert!((mc - mf).abs() < bar, "coarse {mc} fine {mf} bar {bar}");
}

#[test]
fn histogram_converges_as_samples_grow() {
    let (b, rho) = ou();
    let small = histogram_l1(&b, &rho, 0.01, 50, 40, 5);
    let large = histogram_l1(&b, &rho, 0.01, 800, 40, 6);
    assert!(large < 0.5 * small, "{small} -> {large}");
}

#[test]
fn free_increments_have_wiener_statistics() {
    let g = build_grid(-50.0, 50.0, 101).unwrap();
    let b = ScalarField::zeros(g, FieldRole::Drift);
    let (nu, dt) = (0.7, 1e-3);
    let cfg = SdeConfig {
        dt,
        n_steps: 2,
        n_paths: 20_000,
        burn_in: 1,
        seed: 11,
        nu,
        sample_every: 1,
        log_increments: true,
    };
    let batch = simulate(&b, &cfg, &InitialCondition::Point(0.0)).unwrap();
    let m = moments(batch.increments_logged.as_ref().unwrap()).unwrap();
    assert!(m.mean.abs() < 3.0 * m.mean_se, "{m:?}");
    assert!((m.variance - 2.0 * nu * dt).abs() < 3.0 * m.variance_se, "{m:?}");
}
