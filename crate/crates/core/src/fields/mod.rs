//! Grid functions on the mapped polar grid, quadrature, the Neumann
//! Laplacian and the norms used by the reduction.
//!
//! The Laplacian is the weak (P1 finite element) form `Δ = −W⁻¹G` with `W` the
//! diagonal quadrature weights and `G` the stiffness matrix. Homogeneous
//! Neumann conditions are natural in this form, the operator is symmetric in
//! the weighted inner product and it annihilates constants, so mass is
//! conserved exactly.

mod eigen;
mod grid;
mod io;
mod linsolve;
mod sparse;

use std::sync::Arc;

pub use eigen::{constrained_eigenpairs, EigenPairs, PencilSpec};
pub use grid::{GridFocus, GridParams, GridSpec};
pub use io::{read_csv, read_field, write_csv, write_field};
pub use linsolve::SpdFactor;
pub use sparse::CsrMatrix;

use crate::error::{Error, Result};

/// Nodal values on a shared grid.
#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: Arc<GridSpec>,
    values: Vec<f64>,
}

impl PartialEq for ScalarField {
    fn eq(&self, other: &Self) -> bool {
        self.grid.hash() == other.grid.hash() && self.values == other.values
    }
}

impl ScalarField {
    pub fn zeros(grid: &Arc<GridSpec>) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Arc<GridSpec>, value: f64) -> Self {
        ScalarField { grid: grid.clone(), values: vec![value; grid.len()] }
    }

    pub fn from_values(grid: &Arc<GridSpec>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        Ok(ScalarField { grid: grid.clone(), values })
    }

    /// Samples `f` at every node position.
    pub fn from_fn(grid: &Arc<GridSpec>, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = grid.points().iter().map(|&p| f(p)).collect();
        ScalarField { grid: grid.clone(), values }
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn same_grid(&self, other: &ScalarField) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || self.grid.hash() == other.grid.hash()
    }

    fn check(&self, other: &ScalarField) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Weighted L² inner product `Σ w a b`.
    pub fn inner(&self, other: &ScalarField) -> Result<f64> {
        self.check(other)?;
        Ok(weighted_dot(self.grid.weights(), &self.values, &other.values))
    }

    pub fn norm(&self) -> f64 {
        weighted_dot(self.grid.weights(), &self.values, &self.values).sqrt()
    }

    /// `‖∇v‖² = vᵀGv`.
    pub fn grad_norm_sq(&self) -> f64 {
        self.grid.stiffness().form(&self.values, &self.values).max(0.0)
    }

    /// `(ε²‖∇v‖² + ‖v‖²)^{1/2}`.
    pub fn h1eps_norm(&self, eps: f64) -> f64 {
        (eps * eps * self.grad_norm_sq() + self.norm().powi(2)).sqrt()
    }

    pub fn l1_norm(&self) -> f64 {
        self.grid.weights().iter().zip(&self.values).map(|(w, v)| w * v.abs()).sum()
    }

    pub fn linf_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Discrete Laplacian with homogeneous Neumann boundary conditions.
    pub fn laplacian_neumann(&self) -> ScalarField {
        let mut out = vec![0.0; self.values.len()];
        self.grid.stiffness().apply(&self.values, &mut out);
        for (o, w) in out.iter_mut().zip(self.grid.weights()) {
            *o = -*o / w;
        }
        ScalarField { grid: self.grid.clone(), values: out }
    }

    /// `(mean, mass)` with `mass = (v, 1)`.
    pub fn mean_mass(&self) -> (f64, f64) {
        let mass: f64 = self.grid.weights().iter().zip(&self.values).map(|(w, v)| w * v).sum();
        (mass / self.grid.area(), mass)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `self += alpha · other`.
    pub fn axpy(&mut self, alpha: f64, other: &ScalarField) -> Result<()> {
        self.check(other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scaled(&self, alpha: f64) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| alpha * v).collect(),
        }
    }

    pub fn sub(&self, other: &ScalarField) -> Result<ScalarField> {
        self.check(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(ScalarField { grid: self.grid.clone(), values })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

pub(crate) fn weighted_dot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, a), b)| w * a * b).sum()
}
