//! Discrete differential operators on conformal grids.
//!
//! The whole system is conformally flat, so the Laplacian of
//! g = g0 dz dz&#772; reduces to a weighted flat stencil:
//! lap_g = (1/g0) d_z d_zbar = (1/(4 g0)) (d_xx + d_yy).

use std::sync::Arc;

use crate::differential::RDifferential;
use crate::error::Result;
use crate::geometry::field::ScalarField;
use crate::geometry::grid::DomainGrid;
use crate::geometry::metric::BackgroundMetric;

/// Five-point flat Laplacian (d_xx + d_yy) on interior nodes; boundary
/// entries of the result are zero.
pub fn flat_laplacian(f: &ScalarField) -> ScalarField {
    let grid = f.grid().clone();
    let h2 = grid.spacing * grid.spacing;
    let mut out = vec![0.0; grid.node_count()];
    let v = f.values();
    for (k, &c) in grid.interior_nodes().iter().enumerate() {
        let [xp, xm, yp, ym] = grid.stencil(k);
        out[c as usize] = (v[xp as usize] + v[xm as usize] + v[yp as usize] + v[ym as usize]
            - 4.0 * v[c as usize])
            / h2;
    }
    ScalarField::from_values(grid, out).expect("sized to grid")
}

/// Laplacian with respect to the background metric: (1/(4 g0)) times the
/// five-point flat Laplacian. Boundary entries are zero.
pub fn laplacian_g(f: &ScalarField, metric: &BackgroundMetric) -> Result<ScalarField> {
    let grid = f.grid().clone();
    let g0 = metric.g0_field(&grid)?;
    let flat = flat_laplacian(f);
    let mut out = flat.values().to_vec();
    for &c in grid.interior_nodes() {
        out[c as usize] /= 4.0 * g0.get(c as usize);
    }
    ScalarField::from_values(grid, out)
}

/// Gaussian curvature of the background metric.
///
/// Closed-form kinds are exact per node (0 for euclidean, -1 for the
/// hyperbolic kinds). Sampled metrics use the stencil on log g0 and carry
/// O(h^2) error; their boundary entries copy the nearest interior value.
pub fn gaussian_curvature(
    metric: &BackgroundMetric,
    grid: &Arc<DomainGrid>,
) -> Result<ScalarField> {
    match metric {
        BackgroundMetric::Euclidean => Ok(ScalarField::fill(grid.clone(), 0.0)),
        BackgroundMetric::PoincareDisk { .. } | BackgroundMetric::PoincareExterior { .. } => {
            // Exact: these kinds have constant curvature -1. Validate g0
            // finiteness on the grid as a side effect.
            metric.g0_field(grid)?;
            Ok(ScalarField::fill(grid.clone(), -1.0))
        }
        BackgroundMetric::Custom(_) => {
            let g0 = metric.g0_field(grid)?;
            let log_g0 = g0.map(f64::ln);
            let lap = flat_laplacian(&log_g0);
            let mut out = vec![f64::NAN; grid.node_count()];
            for &c in grid.interior_nodes() {
                let c = c as usize;
                out[c] = -2.0 / g0.get(c) * lap.get(c) / 4.0;
            }
            // Flat extension to boundary nodes: copy an adjacent interior
            // value so every masked-in entry is finite.
            for &b in grid.boundary_nodes() {
                let (i, j) = grid.lattice_of(b as usize);
                let mut v = f64::NAN;
                for (di, dj) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
                    let (ni, nj) = (i as i64 + di, j as i64 + dj);
                    if ni < 0 || nj < 0 {
                        continue;
                    }
                    if let Some(c) = grid.compact_at(ni as usize, nj as usize) {
                        if out[c].is_finite() {
                            v = out[c];
                            break;
                        }
                    }
                }
                out[b as usize] = if v.is_finite() { v } else { 0.0 };
            }
            ScalarField::from_values(grid.clone(), out)
        }
    }
}

/// Square norm of the differential: |q|_g^2 = q qbar / g0^r, per node.
pub fn q_norm_sq(
    q: &RDifferential,
    metric: &BackgroundMetric,
    grid: &Arc<DomainGrid>,
) -> Result<ScalarField> {
    let g0 = metric.g0_field(grid)?;
    let mut out = Vec::with_capacity(grid.node_count());
    let r = q.order() as i32;
    for c in grid.all_nodes() {
        let z = grid.z_of(c);
        let qv = q.eval(z)?;
        out.push(qv.norm_sqr() * g0.get(c).powi(-r));
    }
    ScalarField::from_values(grid.clone(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::grid::Region;
    use num_complex::Complex64;

    fn grid(region: Region, h: f64) -> Arc<DomainGrid> {
        Arc::new(DomainGrid::new(region, h).unwrap())
    }

    #[test]
    fn curvature_euclidean_is_zero() {
        let g = grid(Region::disk(1.0), 0.1);
        let k = gaussian_curvature(&BackgroundMetric::Euclidean, &g).unwrap();
        assert_eq!(k.sup_norm(), 0.0);
    }

    #[test]
    fn curvature_poincare_disk_is_minus_one_for_all_radii() {
        for radius in [0.5, 1.0, 2.0] {
            let g = grid(Region::disk(radius), radius / 20.0);
            let m = BackgroundMetric::poincare_disk(radius);
            let k = gaussian_curvature(&m, &g).unwrap();
            for c in g.all_nodes() {
                assert_eq!(k.get(c), -1.0);
            }
        }
    }

    #[test]
    fn curvature_custom_gaussian_factor() {
        // g0 = exp(|z|^2): k = -2 exp(-|z|^2) up to O(h^2).
        let g = grid(Region::square(1.0), 0.01);
        let f = ScalarField::from_fn(g.clone(), |z| z.norm_sqr().exp());
        let m = BackgroundMetric::Custom(f);
        let k = gaussian_curvature(&m, &g).unwrap();
        let mut worst = 0.0f64;
        for &c in g.interior_nodes() {
            let z = g.z_of(c as usize);
            let expected = -2.0 * (-z.norm_sqr()).exp();
            worst = worst.max((k.get(c as usize) - expected).abs());
        }
        assert!(worst < 5e-4, "worst deviation {worst}");
    }

    #[test]
    fn laplacian_of_constant_vanishes() {
        let g = grid(Region::disk(1.0), 0.1);
        let f = ScalarField::fill(g.clone(), 3.25);
        let lap = laplacian_g(&f, &BackgroundMetric::Euclidean).unwrap();
        assert_eq!(lap.sup_norm(), 0.0);
    }

    #[test]
    fn laplacian_of_abs_squared_is_one() {
        // d_z d_zbar |z|^2 = 1, exact for the stencil on quadratics.
        let g = grid(Region::disk(1.0), 0.1);
        let f = ScalarField::from_fn(g.clone(), |z| z.norm_sqr());
        let lap = laplacian_g(&f, &BackgroundMetric::Euclidean).unwrap();
        for &c in g.interior_nodes() {
            assert!((lap.get(c as usize) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn laplacian_cubic_richardson() {
        // f = x^3: lap_g f = 6x/4 with O(h^2) error; halving h cuts the
        // worst error by about 4.
        let err_at = |h: f64| -> f64 {
            let g = grid(Region::square(1.0), h);
            let f = ScalarField::from_fn(g.clone(), |z| z.re.powi(3));
            let lap = laplacian_g(&f, &BackgroundMetric::Euclidean).unwrap();
            let mut worst = 0.0f64;
            for &c in g.interior_nodes() {
                let z = g.z_of(c as usize);
                worst = worst.max((lap.get(c as usize) - 6.0 * z.re / 4.0).abs());
            }
            worst
        };
        let e1 = err_at(0.05);
        let e2 = err_at(0.025);
        // x^3 has zero fourth derivative, so the stencil is exact on it.
        assert!(e1 < 1e-10 && e2 < 1e-10, "five-point stencil exact on cubics: {e1} {e2}");
        // A quartic exercises the O(h^2) error genuinely.
        let err_quartic = |h: f64| -> f64 {
            let g = grid(Region::square(1.0), h);
            let f = ScalarField::from_fn(g.clone(), |z| z.re.powi(4));
            let lap = laplacian_g(&f, &BackgroundMetric::Euclidean).unwrap();
            let mut worst = 0.0f64;
            for &c in g.interior_nodes() {
                let z = g.z_of(c as usize);
                worst = worst.max((lap.get(c as usize) - 12.0 * z.re * z.re / 4.0).abs());
            }
            worst
        };
        let q1 = err_quartic(0.05);
        let q2 = err_quartic(0.025);
        let rate = q1 / q2;
        assert!((3.0..5.0).contains(&rate), "O(h^2) reduction, got factor {rate}");
    }

    #[test]
    fn laplacian_is_linear() {
        let g = grid(Region::disk(1.0), 0.1);
        let f = ScalarField::from_fn(g.clone(), |z| (z.re * 1.3).sin() + z.im);
        let h = ScalarField::from_fn(g.clone(), |z| z.norm_sqr() - 0.4 * z.re);
        let m = BackgroundMetric::poincare_disk(1.0);
        let lhs = laplacian_g(&f.scaled(2.0).add(&h.scaled(-0.7)).unwrap(), &m).unwrap();
        let rhs = laplacian_g(&f, &m)
            .unwrap()
            .scaled(2.0)
            .add(&laplacian_g(&h, &m).unwrap().scaled(-0.7))
            .unwrap();
        assert!(lhs.sub(&rhs).unwrap().sup_norm() < 1e-12);
    }

    #[test]
    fn flat_laplacian_symmetric_on_zero_boundary_fields() {
        let g = grid(Region::disk(1.0), 0.1);
        let zero_at_boundary = |f: ScalarField| -> ScalarField {
            let mut f = f;
            for &b in f.grid().clone().boundary_nodes() {
                f.set(b as usize, 0.0);
            }
            f
        };
        let f = zero_at_boundary(ScalarField::from_fn(g.clone(), |z| (1.0 - z.norm_sqr()) * z.re));
        let h = zero_at_boundary(ScalarField::from_fn(g.clone(), |z| {
            (1.0 - z.norm_sqr()) * (z.im + 0.3)
        }));
        let lf = flat_laplacian(&f);
        let lh = flat_laplacian(&h);
        let dot = |a: &ScalarField, b: &ScalarField| -> f64 {
            a.values().iter().zip(b.values()).map(|(&x, &y)| x * y).sum()
        };
        let lhs = dot(&lf, &h);
        let rhs = dot(&f, &lh);
        assert!(
            (lhs - rhs).abs() <= 1e-13 * lhs.abs().max(rhs.abs()).max(1.0),
            "symmetry defect {}",
            (lhs - rhs).abs()
        );
    }

    #[test]
    fn q_norm_examples() {
        // q = dz^r on the euclidean metric has |q|_g^2 = 1.
        let g = grid(Region::disk(1.0), 0.1);
        let q = RDifferential::new(3, vec![Complex64::new(1.0, 0.0)]).unwrap();
        let f = q_norm_sq(&q, &BackgroundMetric::Euclidean, &g).unwrap();
        for c in g.all_nodes() {
            assert!((f.get(c) - 1.0).abs() < 1e-14);
        }

        // q = dz^2 on the unit Poincare disk: |q|_g^2 = ((1-|z|^2)/2)^4.
        let q = RDifferential::new(2, vec![Complex64::new(1.0, 0.0)]).unwrap();
        let f = q_norm_sq(&q, &BackgroundMetric::poincare_disk(1.0), &g).unwrap();
        for c in g.all_nodes() {
            let z = g.z_of(c);
            let expected = ((1.0 - z.norm_sqr()) / 2.0).powi(4);
            assert!((f.get(c) - expected).abs() < 1e-13);
        }

        // q = z dz^3 euclidean at z = 0.5: |z|^2 = 0.25.
        let q = RDifferential::new(3, vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)])
            .unwrap();
        let f = q_norm_sq(&q, &BackgroundMetric::Euclidean, &g).unwrap();
        let c = g
            .all_nodes()
            .find(|&c| (g.z_of(c) - Complex64::new(0.5, 0.0)).norm() < 1e-12)
            .unwrap();
        assert!((f.get(c) - 0.25).abs() < 1e-14);
    }

    #[test]
    fn q_norm_scales_as_g0_to_minus_r() {
        let g = grid(Region::square(1.0), 0.1);
        let r = 3;
        let q = RDifferential::new(r, vec![Complex64::new(0.3, 0.1), Complex64::new(1.0, -0.5)])
            .unwrap();
        let base = ScalarField::from_fn(g.clone(), |z| 1.0 + z.norm_sqr());
        let lambda = 2.5;
        let m1 = BackgroundMetric::Custom(base.clone());
        let m2 = BackgroundMetric::Custom(base.scaled(lambda));
        let f1 = q_norm_sq(&q, &m1, &g).unwrap();
        let f2 = q_norm_sq(&q, &m2, &g).unwrap();
        for c in g.all_nodes() {
            let expected = f1.get(c) / lambda.powi(r as i32);
            assert!((f2.get(c) - expected).abs() <= 1e-13 * expected.abs().max(1e-30));
        }
    }
}
