use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numcore::RadialGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    DirichletZero,
    NeumannZero,
    PoleRegular,
}

/// Real samples on a shared grid, with boundary metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
    boundary: (BoundaryKind, BoundaryKind),
}

impl ScalarField {
    pub fn new(
        grid: Arc<RadialGrid>,
        values: Vec<f64>,
        boundary: (BoundaryKind, BoundaryKind),
    ) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidField("non-finite sample"));
        }
        let n = values.len();
        if (boundary.0 == BoundaryKind::DirichletZero && values[0] != 0.0)
            || (boundary.1 == BoundaryKind::DirichletZero && values[n - 1] != 0.0)
        {
            return Err(Error::InvalidField("dirichlet end must be exactly 0"));
        }
        Ok(Self { grid, values, boundary })
    }

    /// Field with Neumann ends, sampled from a closure.
    pub fn from_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes().iter().map(|&x| f(x)).collect();
        Self::new(grid, values, (BoundaryKind::NeumannZero, BoundaryKind::NeumannZero))
    }

    pub fn constant(grid: Arc<RadialGrid>, c: f64) -> Result<Self> {
        Self::from_fn(grid, |_| c)
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn boundary(&self) -> (BoundaryKind, BoundaryKind) {
        self.boundary
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn shares_grid(&self, other: &ScalarField) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || self.grid.nodes() == other.grid.nodes()
    }

    /// Same grid and boundary, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.grid.clone(), values, self.boundary)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
            boundary: self.boundary,
        }
    }
}

/// Σ wᵢ·fieldᵢ·densityᵢ with the grid's quadrature weights.
pub fn integrate(field: &ScalarField, density: &ScalarField) -> Result<f64> {
    if !field.shares_grid(density) {
        return Err(Error::GridMismatch);
    }
    Ok(field
        .grid
        .weights()
        .iter()
        .zip(field.values.iter().zip(&density.values))
        .map(|(w, (v, d))| w * v * d)
        .sum())
}
