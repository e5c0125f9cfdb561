//! Gauss–Laguerre rule for `∫₀^∞ e^{-s} f(s) ds`.

use crate::error::{Error, Result};

/// `(L_n(x), L_{n-1}(x))` by the three-term recurrence.
fn laguerre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = 1.0 - x;
    if n == 0 {
        return (p0, 0.0);
    }
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0 - x) * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    (p1, p0)
}

/// Nodes and weights of the `n`-point rule, nodes ascending.
///
/// Roots are found by Newton iteration from the classical asymptotic
/// starting guesses; weights are `x / ((n+1) L_{n+1}(x))²`.
pub fn gauss_laguerre(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 || n > 100 {
        return Err(Error::InvalidArgument(format!(
            "Gauss-Laguerre order must be in 1..=100, got {n}"
        )));
    }
    let nf = n as f64;
    let mut nodes: Vec<f64> = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let mut z = 0.0;
    for i in 0..n {
        z = match i {
            0 => 3.0 / (1.0 + 2.4 * nf),
            1 => z + 15.0 / (1.0 + 2.5 * nf),
            _ => {
                let ai = (i - 1) as f64;
                z + (1.0 + 2.55 * ai) / (1.9 * ai) * (z - nodes[i - 2])
            }
        };
        let mut converged = false;
        for _ in 0..100 {
            let (p, pm1) = laguerre(n, z);
            let dp = nf * (p - pm1) / z;
            let step = p / dp;
            z -= step;
            if step.abs() <= 1e-14 * z.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Convergence {
                iterations: 100,
                residual: laguerre(n, z).0.abs(),
                tolerance: 1e-14,
            });
        }
        let (lnp1, _) = laguerre(n + 1, z);
        nodes.push(z);
        weights.push(z / ((nf + 1.0) * lnp1).powi(2));
    }
    Ok((nodes, weights))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(k: u32) -> f64 {
        (1..=k).map(f64::from).product()
    }

    #[test]
    fn moments_are_factorials() {
        for n in [1usize, 2, 5, 16, 32, 64, 100] {
            let (x, w) = gauss_laguerre(n).unwrap();
            assert!(x.windows(2).all(|p| p[1] > p[0]));
            for k in 0..(2 * n as u32).min(24) {
                let m: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k as i32)).sum();
                let rel = (m - factorial(k)) / factorial(k);
                assert!(rel.abs() < 1e-11, "n={n} k={k} rel={rel}");
            }
        }
    }

    #[test]
    fn two_point_rule_closed_form() {
        // Roots of L_2 = (x² - 4x + 2)/2 are 2 ∓ √2.
        let (x, w) = gauss_laguerre(2).unwrap();
        let r = 2f64.sqrt();
        assert!((x[0] - (2.0 - r)).abs() < 1e-14 && (x[1] - (2.0 + r)).abs() < 1e-14);
        assert!((w[0] - (2.0 + r) / 4.0).abs() < 1e-14 && (w[1] - (2.0 - r) / 4.0).abs() < 1e-14);
    }

    #[test]
    fn resolvent_integral() {
        // ∫ e^{-s} e^{-k s} ds = 1/(1+k)
        let (x, w) = gauss_laguerre(16).unwrap();
        for k in [0.1, 0.5, 1.0] {
            let v: f64 = x.iter().zip(&w).map(|(x, w)| w * (-k * x).exp()).sum();
            assert!((v - 1.0 / (1.0 + k)).abs() < 1e-6 / (1.0 + k), "k={k}");
        }
        assert!(gauss_laguerre(0).is_err());
    }
}
