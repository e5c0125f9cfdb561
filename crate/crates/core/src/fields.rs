//! Uniform grids, role-tagged scalar fields and second-order finite
//! differences.
//!
//! Every spatial integral in the crate goes through [`ScalarField::integral`]
//! (trapezoidal rule) and every derivative through [`gradient`] or
//! [`laplacian`], so that all downstream error budgets are O(h²).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Density floor below which pointwise residual checks skip a node.
pub const MASK_DENSITY_FLOOR: f64 = 1e-12;
/// Nodes closer than this to either boundary are skipped by residual checks.
pub const MASK_EDGE_NODES: usize = 5;

const DENSITY_NORM_TOL: f64 = 1e-12;

/// Uniform mesh on `[x_min, x_max]` with `n` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    x_min: f64,
    x_max: f64,
    n: usize,
    h: f64,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) || x_max <= x_min {
            return Err(Error::InvalidBounds { x_min, x_max });
        }
        if n < 3 {
            return Err(Error::TooFewNodes(n));
        }
        let h = (x_max - x_min) / (n - 1) as f64;
        Ok(Self { x_min, x_max, n, h })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// Position of node `i`.
    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.h
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    /// Node closest to `x`, clamped to the grid.
    pub fn nearest(&self, x: f64) -> usize {
        let t = ((x - self.x_min) / self.h).round();
        if t <= 0.0 {
            0
        } else {
            (t as usize).min(self.n - 1)
        }
    }

    /// Trapezoidal weight of node `i`.
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.n {
            0.5 * self.h
        } else {
            self.h
        }
    }

    /// Cell index `i` and fraction `t` with `x = x_i + t h`, clamped to the domain.
    pub(crate) fn locate(&self, x: f64) -> (usize, f64) {
        let s = (x - self.x_min) / self.h;
        if s <= 0.0 {
            return (0, 0.0);
        }
        let i = (s.floor() as usize).min(self.n - 2);
        let t = (s - i as f64).min(1.0);
        (i, t)
    }
}

/// Build a grid, checking bounds and node count.
pub fn build_grid(x_min: f64, x_max: f64, n: usize) -> Result<Grid1D> {
    Grid1D::new(x_min, x_max, n)
}

/// What a field represents. Densities carry extra invariants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldRole {
    Potential,
    Density,
    LogDensity,
    Drift,
    Force,
    Generic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    DirichletZero,
    /// Node `n-1` is identified with node `0`; the period is `(n-1) h`.
    Periodic,
}

/// Node-indexed real function on a [`Grid1D`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid1D,
    values: Vec<f64>,
    role: FieldRole,
}

impl ScalarField {
    pub fn new(grid: Grid1D, values: Vec<f64>, role: FieldRole) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { index, value });
        }
        let field = Self { grid, values, role };
        if role == FieldRole::Density {
            field.check_density()?;
        }
        Ok(field)
    }

    pub fn from_fn(grid: Grid1D, role: FieldRole, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(grid.x(i))).collect();
        Self::new(grid, values, role)
    }

    /// Skip the density checks; used where a tolerance other than the
    /// default applies and is enforced by the caller.
    pub(crate) fn new_unchecked(grid: Grid1D, values: Vec<f64>, role: FieldRole) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values, role }
    }

    pub fn zeros(grid: Grid1D, role: FieldRole) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
            role,
        }
    }

    /// Normalize nonnegative values to unit trapezoidal mass.
    pub fn normalized_density(grid: Grid1D, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidDensity(format!("value {v} is negative or non-finite")));
        }
        let mass = trapezoid(&grid, &values);
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidDensity(format!("total mass {mass} cannot be normalized")));
        }
        values.iter_mut().for_each(|v| *v /= mass);
        Self::new(grid, values, FieldRole::Density)
    }

    fn check_density(&self) -> Result<()> {
        if let Some(v) = self.values.iter().find(|v| **v < 0.0) {
            return Err(Error::InvalidDensity(format!("negative value {v}")));
        }
        let mass = self.integral();
        if (mass - 1.0).abs() > DENSITY_NORM_TOL {
            return Err(Error::InvalidDensity(format!("integral {mass} is not 1")));
        }
        Ok(())
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn role(&self) -> FieldRole {
        self.role
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Re-tag the field, re-checking the invariants of the new role.
    pub fn with_role(self, role: FieldRole) -> Result<Self> {
        Self::new(self.grid, self.values, role)
    }

    /// Node-wise map; the result is tagged `role`.
    pub fn map(&self, role: FieldRole, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.grid, self.values.iter().map(|&v| f(v)).collect(), role)
    }

    pub fn integral(&self) -> f64 {
        trapezoid(&self.grid, &self.values)
    }

    /// Piecewise-linear interpolation, clamped outside the domain.
    pub fn interpolate(&self, x: f64) -> f64 {
        let (i, t) = self.grid.locate(x);
        self.values[i] + t * (self.values[i + 1] - self.values[i])
    }

    /// Values of the piecewise-linear interpolant at the nodes of `grid`.
    pub fn resample(&self, grid: &Grid1D) -> Vec<f64> {
        (0..grid.len()).map(|i| self.interpolate(grid.x(i))).collect()
    }

    /// Integral of the piecewise-linear interpolant over `[a, b]`.
    pub fn integrate_between(&self, a: f64, b: f64) -> f64 {
        self.primitive(b) - self.primitive(a)
    }

    /// Integral of the interpolant from `x_min` to `x`.
    fn primitive(&self, x: f64) -> f64 {
        let g = &self.grid;
        let x = x.clamp(g.x_min(), g.x_max());
        let (i, t) = g.locate(x);
        let h = g.spacing();
        let full: f64 = neumaier_sum((0..i).map(|k| 0.5 * h * (self.values[k] + self.values[k + 1])));
        let (v0, v1) = (self.values[i], self.values[i + 1]);
        full + h * t * (v0 + 0.5 * t * (v1 - v0))
    }

    /// Largest absolute value.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Trapezoidal rule over all nodes of `grid`.
pub fn trapezoid(grid: &Grid1D, values: &[f64]) -> f64 {
    neumaier_sum(values.iter().enumerate().map(|(i, v)| grid.weight(i) * v))
}

/// Compensated (Neumaier) summation.
pub fn neumaier_sum(iter: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in iter {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[inline]
fn neighbours(i: usize, n: usize) -> (usize, usize) {
    let left = if i == 0 { n - 2 } else { i - 1 };
    let right = if i == n - 1 { 1 } else { i + 1 };
    (left, right)
}

/// First derivative by central differences.
///
/// Dirichlet edges use the one-sided second-order stencil; periodic edges
/// wrap around with node `n-1` identified with node `0`.
pub fn gradient(f: &ScalarField, bc: BoundaryCondition) -> ScalarField {
    let v = &f.values;
    let n = v.len();
    let h = f.grid.spacing();
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        out[i] = (v[i + 1] - v[i - 1]) / (2.0 * h);
    }
    match bc {
        BoundaryCondition::DirichletZero => {
            out[0] = (4.0 * (v[1] - v[0]) - (v[2] - v[0])) / (2.0 * h);
            out[n - 1] = (4.0 * (v[n - 1] - v[n - 2]) - (v[n - 1] - v[n - 3])) / (2.0 * h);
        }
        BoundaryCondition::Periodic => {
            for i in [0, n - 1] {
                let (l, r) = neighbours(i, n);
                out[i] = (v[r] - v[l]) / (2.0 * h);
            }
        }
    }
    ScalarField {
        grid: f.grid,
        values: out,
        role: FieldRole::Generic,
    }
}

/// Second derivative by the 3-point stencil.
///
/// Dirichlet edges use the one-sided 4-point stencil (exact for cubics);
/// on a 3-node grid the edges copy the single interior value.
pub fn laplacian(f: &ScalarField, bc: BoundaryCondition) -> ScalarField {
    let v = &f.values;
    let n = v.len();
    let h2 = f.grid.spacing().powi(2);
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        out[i] = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / h2;
    }
    match bc {
        BoundaryCondition::DirichletZero => {
            if n >= 4 {
                out[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / h2;
                out[n - 1] = (2.0 * v[n - 1] - 5.0 * v[n - 2] + 4.0 * v[n - 3] - v[n - 4]) / h2;
            } else {
                out[0] = out[1];
                out[n - 1] = out[1];
            }
        }
        BoundaryCondition::Periodic => {
            for i in [0, n - 1] {
                let (l, r) = neighbours(i, n);
                out[i] = (v[r] - 2.0 * v[i] + v[l]) / h2;
            }
        }
    }
    ScalarField {
        grid: f.grid,
        values: out,
        role: FieldRole::Generic,
    }
}

/// Shared pointwise-check mask: drop nodes with `rho < 1e-12` or within
/// five nodes of either boundary.
pub fn interior_mask(rho: &ScalarField) -> Vec<bool> {
    let n = rho.len();
    rho.values
        .iter()
        .enumerate()
        .map(|(i, &r)| r >= MASK_DENSITY_FLOOR && i >= MASK_EDGE_NODES && i + MASK_EDGE_NODES < n)
        .collect()
}

/// Trapezoidal L1 distance between two fields on the same grid.
pub fn l1_distance(a: &ScalarField, b: &ScalarField) -> f64 {
    debug_assert_eq!(a.grid, b.grid);
    let diff: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).collect();
    trapezoid(&a.grid, &diff)
}

/// `||a||₂ / ||b||₂` over the masked nodes.
#[cfg(test)]
pub(crate) fn masked_relative_l2(a: &[f64], b: &[f64], mask: &[bool]) -> f64 {
    let num = neumaier_sum(a.iter().zip(mask).filter(|(_, m)| **m).map(|(v, _)| v * v));
    let den = neumaier_sum(b.iter().zip(mask).filter(|(_, m)| **m).map(|(v, _)| v * v));
    (num / den).sqrt()
}
