//! Tridiagonal kernels: Thomas solves, pivoted LU, Sturm-sequence
//! bisection and inverse iteration for symmetric matrices.

use crate::error::{Error, Result};

/// Solve `A x = rhs` for tridiagonal `A` without pivoting.
///
/// `sub[i]` multiplies `x[i-1]` in row `i` (`sub[0]` unused), `sup[i]`
/// multiplies `x[i+1]` (`sup[n-1]` unused). Intended for diagonally
/// dominant or SPD systems.
pub(crate) fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &mut [f64], scratch: &mut Vec<f64>) {
    let n = diag.len();
    scratch.clear();
    scratch.resize(n, 0.0);
    let c = scratch;
    let mut beta = diag[0];
    rhs[0] /= beta;
    for i in 1..n {
        c[i - 1] = sup[i - 1] / beta;
        beta = diag[i] - sub[i] * c[i - 1];
        rhs[i] = (rhs[i] - sub[i] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
}

/// Pre-factored Thomas solver for repeated solves with one matrix.
#[derive(Debug, Clone)]
pub(crate) struct ThomasFactor {
    sub: Vec<f64>,
    upper: Vec<f64>,
    inv_pivot: Vec<f64>,
}

impl ThomasFactor {
    pub(crate) fn new(sub: &[f64], diag: &[f64], sup: &[f64]) -> Self {
        let n = diag.len();
        let mut upper = vec![0.0; n];
        let mut inv_pivot = vec![0.0; n];
        let mut beta = diag[0];
        inv_pivot[0] = 1.0 / beta;
        for i in 1..n {
            upper[i - 1] = sup[i - 1] * inv_pivot[i - 1];
            beta = diag[i] - sub[i] * upper[i - 1];
            inv_pivot[i] = 1.0 / beta;
        }
        Self {
            sub: sub.to_vec(),
            upper,
            inv_pivot,
        }
    }

    pub(crate) fn solve(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        rhs[0] *= self.inv_pivot[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.sub[i] * rhs[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.upper[i] * rhs[i + 1];
        }
    }
}

/// `out = T x` for the `sub`/`diag`/`sup` layout of [`thomas`].
pub(crate) fn tri_apply(sub: &[f64], diag: &[f64], sup: &[f64], x: &[f64], out: &mut [f64]) {
    let n = diag.len();
    if n == 1 {
        out[0] = diag[0] * x[0];
        return;
    }
    out[0] = diag[0] * x[0] + sup[0] * x[1];
    for i in 1..n - 1 {
        out[i] = sub[i] * x[i - 1] + diag[i] * x[i] + sup[i] * x[i + 1];
    }
    out[n - 1] = sub[n - 1] * x[n - 2] + diag[n - 1] * x[n - 1];
}

/// LU factorization of a general tridiagonal matrix with partial pivoting.
pub(crate) struct TridiagLu {
    lower: Vec<f64>,
    diag: Vec<f64>,
    up1: Vec<f64>,
    up2: Vec<f64>,
    swapped: Vec<bool>,
}

impl TridiagLu {
    /// Factor with the same `sub`/`diag`/`sup` layout as [`thomas`].
    pub(crate) fn new(sub: &[f64], diag: &[f64], sup: &[f64]) -> Result<Self> {
        let n = diag.len();
        let mut d = diag.to_vec();
        let mut up1: Vec<f64> = (0..n).map(|i| if i + 1 < n { sup[i] } else { 0.0 }).collect();
        let mut up2 = vec![0.0; n];
        let mut lower = vec![0.0; n];
        let mut swapped = vec![false; n];
        let mut below: Vec<f64> = (0..n).map(|i| if i + 1 < n { sub[i + 1] } else { 0.0 }).collect();
        let scale = diag
            .iter()
            .chain(sub.iter())
            .chain(sup.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        for i in 0..n.saturating_sub(1) {
            if below[i].abs() > d[i].abs() {
                // Swap rows i and i+1.
                swapped[i] = true;
                let (a, b, c) = (d[i], up1[i], up2[i]);
                d[i] = below[i];
                up1[i] = d[i + 1];
                up2[i] = up1[i + 1];
                below[i] = a;
                d[i + 1] = b;
                up1[i + 1] = c;
            }
            if d[i] == 0.0 {
                d[i] = f64::EPSILON * scale;
            }
            let l = below[i] / d[i];
            lower[i] = l;
            d[i + 1] -= l * up1[i];
            up1[i + 1] -= l * up2[i];
        }
        if d[n - 1] == 0.0 {
            d[n - 1] = f64::EPSILON * scale;
        }
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("tridiagonal factorization produced non-finite pivots".into()));
        }
        Ok(Self {
            lower,
            diag: d,
            up1,
            up2,
            swapped,
        })
    }

    pub(crate) fn solve(&self, rhs: &mut [f64]) {
        let n = self.diag.len();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                rhs.swap(i, i + 1);
            }
            rhs[i + 1] -= self.lower[i] * rhs[i];
        }
        for i in (0..n).rev() {
            let mut v = rhs[i];
            if i + 1 < n {
                v -= self.up1[i] * rhs[i + 1];
            }
            if i + 2 < n {
                v -= self.up2[i] * rhs[i + 2];
            }
            rhs[i] = v / self.diag[i];
        }
    }
}

/// Symmetric tridiagonal matrix: `diag[i]` and `off[i]` coupling `i`, `i+1`.
#[derive(Debug, Clone)]
pub(crate) struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub(crate) fn len(&self) -> usize {
        self.diag.len()
    }

    /// Number of eigenvalues strictly below `x`.
    pub(crate) fn count_below(&self, x: f64) -> usize {
        let mut count = 0;
        let mut q = self.diag[0] - x;
        let tiny = f64::MIN_POSITIVE.sqrt();
        if q < 0.0 {
            count += 1;
        }
        for i in 1..self.len() {
            if q == 0.0 {
                q = tiny;
            }
            q = self.diag[i] - x - self.off[i - 1] * self.off[i - 1] / q;
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 } + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// The `k`-th smallest eigenvalue (0-based) by bisection.
    pub(crate) fn eigenvalue(&self, k: usize) -> f64 {
        let (mut lo, mut hi) = self.gershgorin();
        let pad = 1e-12 * (hi - lo).abs().max(1.0);
        lo -= pad;
        hi += pad;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    pub(crate) fn apply(&self, x: &[f64], out: &mut [f64]) {
        let n = self.len();
        for i in 0..n {
            let mut v = self.diag[i] * x[i];
            if i > 0 {
                v += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                v += self.off[i] * x[i + 1];
            }
            out[i] = v;
        }
    }

    fn shifted_lu(&self, shift: f64) -> Result<TridiagLu> {
        let n = self.len();
        let mut sub = vec![0.0; n];
        let mut sup = vec![0.0; n];
        sub[1..n].copy_from_slice(&self.off[..(n - 1)]);
        sup[..(n - 1)].copy_from_slice(&self.off[..(n - 1)]);
        let diag: Vec<f64> = self.diag.iter().map(|d| d - shift).collect();
        TridiagLu::new(&sub, &diag, &sup)
    }

    /// Inverse iteration for the eigenvector of `lambda`, orthogonalized
    /// against `previous` (unit vectors in the Euclidean inner product).
    /// Returns a Euclidean-unit vector and the iteration count.
    pub(crate) fn eigenvector(
        &self,
        lambda: f64,
        previous: &[Vec<f64>],
        max_iter: usize,
    ) -> Result<(Vec<f64>, usize)> {
        let n = self.len();
        let scale = self.diag.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
        let shift = lambda - 1e-13 * scale;
        let lu = self.shifted_lu(shift)?;
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i * 7919) % 13) as f64 / 13.0).collect();
        let mut work = vec![0.0; n];
        let mut residual = f64::INFINITY;
        let tolerance = 1e-8 * scale;
        for iter in 1..=max_iter {
            orthogonalize(&mut v, previous);
            normalize(&mut v);
            let mut y = v.clone();
            lu.solve(&mut y);
            orthogonalize(&mut y, previous);
            normalize(&mut y);
            self.apply(&y, &mut work);
            let r = work.iter().zip(&y).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt();
            v = y;
            // Iterate to the rounding floor: stop once below tolerance and
            // no longer improving.
            let stalled = r > 0.5 * residual;
            residual = r;
            if residual <= tolerance && (stalled || residual <= 1e-14 * scale) {
                return Ok((v, iter));
            }
        }
        if residual <= tolerance {
            return Ok((v, max_iter));
        }
        Err(Error::Convergence {
            iterations: max_iter,
            residual,
            tolerance,
        })
    }
}

pub(crate) fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
        v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thomas_matches_lu() {
        let n = 6;
        let sub = vec![0.0, -1.0, -1.0, -1.0, -1.0, -1.0];
        let diag = vec![4.0; n];
        let sup = vec![-1.0, -1.0, -1.0, -1.0, -1.0, 0.0];
        let rhs: Vec<f64> = (0..n).map(|i| i as f64 + 1.0).collect();
        let mut a = rhs.clone();
        let mut scratch = Vec::new();
        thomas(&sub, &diag, &sup, &mut a, &mut scratch);
        let mut b = rhs.clone();
        TridiagLu::new(&sub, &diag, &sup).unwrap().solve(&mut b);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-13);
        }
        let mut c = rhs.clone();
        ThomasFactor::new(&sub, &diag, &sup).solve(&mut c);
        assert!(a.iter().zip(&c).all(|(x, y)| (x - y).abs() < 1e-14));
        let mut back = vec![0.0; n];
        tri_apply(&sub, &diag, &sup, &c, &mut back);
        for (x, y) in back.iter().zip(&rhs) {
            assert!((x - y).abs() < 1e-12);
        }
        // Residual check.
        for i in 0..n {
            let mut r = diag[i] * a[i];
            if i > 0 {
                r += sub[i] * a[i - 1];
            }
            if i + 1 < n {
                r += sup[i] * a[i + 1];
            }
            assert!((r - rhs[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn pivoted_lu_handles_zero_diagonal() {
        // [[0, 1, 0], [1, 0, 1], [0, 1, 0.5]]
        let sub = vec![0.0, 1.0, 1.0];
        let diag = vec![0.0, 0.0, 0.5];
        let sup = vec![1.0, 1.0, 0.0];
        let mut x = vec![1.0, 2.0, 3.0];
        TridiagLu::new(&sub, &diag, &sup).unwrap().solve(&mut x);
        let r0 = x[1];
        let r1 = x[0] + x[2];
        let r2 = x[1] + 0.5 * x[2];
        assert!((r0 - 1.0).abs() < 1e-12 && (r1 - 2.0).abs() < 1e-12 && (r2 - 3.0).abs() < 1e-12);
    }

    #[test]
    fn bisection_finds_laplacian_spectrum() {
        // Dirichlet 1D Laplacian: eigenvalues 2 - 2 cos(k pi / (n + 1)).
        let n = 50;
        let m = SymTridiag {
            diag: vec![2.0; n],
            off: vec![-1.0; n - 1],
        };
        for k in 0..5 {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
            assert!((m.eigenvalue(k) - exact).abs() < 1e-13);
            let (v, _) = m.eigenvector(m.eigenvalue(k), &[], 50).unwrap();
            let mut work = vec![0.0; n];
            m.apply(&v, &mut work);
            let r: f64 = work.iter().zip(&v).map(|(a, b)| (a - exact * b).powi(2)).sum::<f64>().sqrt();
            assert!(r < 1e-10);
        }
    }
}
