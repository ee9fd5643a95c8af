//! Conformal background metrics g = g0 dz \otimes d\bar z.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::field::ScalarField;
use crate::geometry::grid::DomainGrid;

/// Background metric kinds. All are conformal; `g0` is the conformal factor.
#[derive(Debug, Clone)]
pub enum BackgroundMetric {
    /// g0 = 1.
    Euclidean,
    /// Complete hyperbolic metric of the disk |z - center| < radius,
    /// g0 = 4R^2 / (R^2 - |z - c|^2)^2, Gaussian curvature -1.
    PoincareDisk { radius: f64, center: Complex64 },
    /// Complete hyperbolic metric of the exterior |z - center| > radius,
    /// g0 = 1 / (|z - c| log(|z - c|/R))^2, Gaussian curvature -1.
    PoincareExterior { radius: f64, center: Complex64 },
    /// Sampled conformal factor; curvature is evaluated by the stencil.
    Custom(ScalarField),
}

impl BackgroundMetric {
    pub fn poincare_disk(radius: f64) -> Self {
        BackgroundMetric::PoincareDisk {
            radius,
            center: Complex64::new(0.0, 0.0),
        }
    }

    pub fn poincare_exterior(radius: f64) -> Self {
        BackgroundMetric::PoincareExterior {
            radius,
            center: Complex64::new(0.0, 0.0),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            BackgroundMetric::Euclidean => "euclidean",
            BackgroundMetric::PoincareDisk { .. } => "poincare_disk",
            BackgroundMetric::PoincareExterior { .. } => "poincare_exterior",
            BackgroundMetric::Custom(_) => "custom",
        }
    }

    /// Closed-form conformal factor, None for sampled metrics.
    pub fn g0_closed_form(&self, z: Complex64) -> Option<f64> {
        match *self {
            BackgroundMetric::Euclidean => Some(1.0),
            BackgroundMetric::PoincareDisk { radius, center } => {
                let d2 = (z - center).norm_sqr();
                let denom = radius * radius - d2;
                if denom > 0.0 {
                    Some(4.0 * radius * radius / (denom * denom))
                } else {
                    Some(f64::INFINITY)
                }
            }
            BackgroundMetric::PoincareExterior { radius, center } => {
                let d = (z - center).norm();
                if d > radius {
                    let t = d * (d / radius).ln();
                    Some(1.0 / (t * t))
                } else {
                    Some(f64::INFINITY)
                }
            }
            BackgroundMetric::Custom(_) => None,
        }
    }

    /// Conformal factor sampled on a grid. Errors if any in-domain value is
    /// nonpositive or non-finite.
    pub fn g0_field(&self, grid: &Arc<DomainGrid>) -> Result<ScalarField> {
        let field = match self {
            BackgroundMetric::Custom(f) => {
                if !Arc::ptr_eq(f.grid(), grid) {
                    return Err(Error::GridMismatch);
                }
                f.clone()
            }
            _ => ScalarField::from_fn(grid.clone(), |z| self.g0_closed_form(z).unwrap()),
        };
        for c in grid.all_nodes() {
            let v = field.get(c);
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidMetric(format!(
                    "g0 = {v} at z = {}",
                    grid.z_of(c)
                )));
            }
        }
        Ok(field)
    }

    /// True when the Gaussian curvature is identically -1.
    pub fn is_hyperbolic(&self) -> bool {
        matches!(
            self,
            BackgroundMetric::PoincareDisk { .. } | BackgroundMetric::PoincareExterior { .. }
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::grid::Region;

    #[test]
    fn poincare_disk_factor() {
        let m = BackgroundMetric::poincare_disk(1.0);
        let g0 = m.g0_closed_form(Complex64::new(0.0, 0.0)).unwrap();
        assert!((g0 - 4.0).abs() < 1e-14);
        let g0 = m.g0_closed_form(Complex64::new(0.5, 0.0)).unwrap();
        assert!((g0 - 4.0 / (0.75f64 * 0.75)).abs() < 1e-12);
    }

    #[test]
    fn poincare_exterior_blows_up_at_rim() {
        let m = BackgroundMetric::poincare_exterior(1.0);
        let near = m.g0_closed_form(Complex64::new(1.001, 0.0)).unwrap();
        let far = m.g0_closed_form(Complex64::new(10.0, 0.0)).unwrap();
        assert!(near > 1e4);
        assert!(far < 1.0);
    }

    #[test]
    fn nonpositive_custom_factor_rejected() {
        let grid = Arc::new(DomainGrid::new(Region::square(1.0), 0.5).unwrap());
        let bad = ScalarField::from_fn(grid.clone(), |z| z.re); // vanishes on the axis
        let m = BackgroundMetric::Custom(bad);
        assert!(m.g0_field(&grid).is_err());
    }
}
