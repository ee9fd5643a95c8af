//! Scalar fields over masked grids.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::grid::DomainGrid;

/// One real value per masked-in grid node.
#[derive(Debug, Clone)]
pub struct ScalarField {
    grid: Arc<DomainGrid>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn fill(grid: Arc<DomainGrid>, value: f64) -> ScalarField {
        let n = grid.node_count();
        ScalarField {
            grid,
            values: vec![value; n],
        }
    }

    pub fn from_fn(grid: Arc<DomainGrid>, f: impl Fn(Complex64) -> f64) -> ScalarField {
        let values = (0..grid.node_count()).map(|c| f(grid.z_of(c))).collect();
        ScalarField { grid, values }
    }

    pub fn from_values(grid: Arc<DomainGrid>, values: Vec<f64>) -> Result<ScalarField> {
        if values.len() != grid.node_count() {
            return Err(Error::GridMismatch);
        }
        Ok(ScalarField { grid, values })
    }

    #[inline]
    pub fn grid(&self) -> &Arc<DomainGrid> {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn get(&self, c: usize) -> f64 {
        self.values[c]
    }

    #[inline]
    pub fn set(&mut self, c: usize, v: f64) {
        self.values[c] = v;
    }

    pub fn same_grid(&self, other: &ScalarField) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid)
    }

    pub fn check_same_grid(&self, other: &ScalarField) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<ScalarField> {
        self.check_same_grid(other)?;
        Ok(ScalarField {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scaled(&self, s: f64) -> ScalarField {
        self.map(|v| s * v)
    }

    pub fn shifted(&self, c: f64) -> ScalarField {
        self.map(|v| v + c)
    }

    pub fn add(&self, other: &ScalarField) -> Result<ScalarField> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> Result<ScalarField> {
        self.zip_map(other, |a, b| a - b)
    }

    /// Sup norm over all masked-in nodes.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, &v| m.max(v.abs()))
    }

    /// Sup norm over interior nodes only.
    pub fn sup_norm_interior(&self) -> f64 {
        self.grid
            .interior_nodes()
            .iter()
            .fold(0.0, |m, &c| m.max(self.values[c as usize].abs()))
    }

    /// Largest value over all masked-in nodes.
    pub fn max_value(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Bilinear sample at an arbitrary point, when the surrounding cell is
    /// fully masked in.
    pub fn sample(&self, z: Complex64) -> Option<f64> {
        let (idx, w) = self.grid.bilinear(z)?;
        Some(
            idx.iter()
                .zip(&w)
                .map(|(&c, &wt)| wt * self.values[c])
                .sum(),
        )
    }
}
