//! Closed-form reference solutions used by the experiment reports.

use std::f64::consts::PI;

/// Gaussian ground state of `[-gamma Δ + c x² + kT ln ρ] ψ = λ ψ`.
///
/// The logarithmic term keeps Gaussians closed: `ρ ∝ exp(-α x²)` solves the
/// equation when `gamma α² + kT α - c = 0`, with `λ = gamma α + (kT/2) ln(α/π)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gausson {
    pub alpha: f64,
    pub lambda: f64,
}

impl Gausson {
    /// `curvature` is the coefficient `c` of `V = c x²`.
    pub fn new(gamma: f64, kt: f64, curvature: f64) -> Self {
        let alpha = (-kt + (kt * kt + 4.0 * gamma * curvature).sqrt()) / (2.0 * gamma);
        let lambda = gamma * alpha + 0.5 * kt * (alpha / PI).ln();
        Self { alpha, lambda }
    }

    pub fn density(&self, x: f64) -> f64 {
        (self.alpha / PI).sqrt() * (-self.alpha * x * x).exp()
    }
}

/// Preacceleration-averaged force for `V = c x²` under the linear drift
/// `b = -kappa x`: the conditional mean decays as `x e^{-kappa t}`, and
/// `-∫ ds e^{-s} 2c x e^{-kappa tau s} = -2c x / (1 + kappa tau)`.
pub fn ou_force(x: f64, curvature: f64, kappa: f64, tau: f64) -> f64 {
    -2.0 * curvature * x / (1.0 + kappa * tau)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gausson_limits() {
        // kT = 0 recovers the harmonic oscillator: α = sqrt(c/γ), λ = γα.
        let g = Gausson::new(0.5, 0.0, 0.5);
        assert!((g.alpha - 1.0).abs() < 1e-15);
        assert!((g.lambda - 0.5).abs() < 1e-15);
        let g = Gausson::new(0.5, 0.1, 0.5);
        assert!((0.5 * g.alpha * g.alpha + 0.1 * g.alpha - 0.5).abs() < 1e-15);
    }
}
