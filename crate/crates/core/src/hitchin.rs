//! The harmonic-bundle side of the dictionary: cyclic Higgs field
//! matrices, their adjoints and commutators, the self-duality residual,
//! and curvature diagnostics of the associated harmonic map.
//!
//! At each node the Higgs field is the r x r cyclic matrix with
//! subdiagonal ones and corner entry beta (|beta|^2 = |q|_g^2) in the unit
//! frame v_i, the metric is diag(e^{w_i}) with the reality-extended tuple,
//! and all norms and adjoints are taken with those weights.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::differential::RDifferential;
use crate::error::{Error, Result};
use crate::geometry::field::ScalarField;
use crate::geometry::grid::DomainGrid;
use crate::geometry::metric::BackgroundMetric;
use crate::geometry::ops::{flat_laplacian, gaussian_curvature, laplacian_g};
use crate::toda::{RhsContext, TodaField};

/// The pointwise data of the cyclic Higgs field at one node.
#[derive(Debug, Clone)]
pub struct CyclicHiggsSample {
    pub r: usize,
    /// Matrix in the v-frame: subdiagonal ones, corner entry beta.
    pub theta: DMatrix<Complex64>,
    /// e^{w_i} for the reality-extended tuple; product is 1.
    pub h_diag: Vec<f64>,
    pub point: Complex64,
}

impl CyclicHiggsSample {
    /// Adjoint with respect to the diagonal metric:
    /// (A*)_{ij} = conj(A_{ji}) h_j / h_i.
    pub fn adjoint(&self, a: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let r = self.r;
        let mut out = DMatrix::zeros(r, r);
        for i in 0..r {
            for j in 0..r {
                out[(i, j)] = a[(j, i)].conj() * (self.h_diag[j] / self.h_diag[i]);
            }
        }
        out
    }

    /// Squared norm with the metric weights: sum |A_{ij}|^2 h_i / h_j.
    pub fn norm_sq(&self, a: &DMatrix<Complex64>) -> f64 {
        let r = self.r;
        let mut total = 0.0;
        for i in 0..r {
            for j in 0..r {
                total += a[(i, j)].norm_sqr() * self.h_diag[i] / self.h_diag[j];
            }
        }
        total
    }

    pub fn commutator(&self) -> DMatrix<Complex64> {
        let adj = self.adjoint(&self.theta);
        &self.theta * &adj - adj * &self.theta
    }

    /// |theta|^2 with the (h, g) weights.
    pub fn theta_norm_sq(&self) -> f64 {
        self.norm_sq(&self.theta)
    }

    /// The same matrix re-expressed in the orthonormalized frame, where
    /// the metric is standard and adjoints are conjugate transposes; used
    /// as the dense cross-check route.
    pub fn unit_frame(&self) -> DMatrix<Complex64> {
        let r = self.r;
        let mut m = DMatrix::zeros(r, r);
        for i in 0..r {
            for j in 0..r {
                m[(i, j)] =
                    self.theta[(i, j)] * (self.h_diag[i] / self.h_diag[j]).sqrt();
            }
        }
        m
    }
}

/// Assemble the sample at a node from the solution field.
pub fn build_sample(
    w: &TodaField,
    ctx: &RhsContext,
    node: usize,
) -> CyclicHiggsSample {
    let r = w.r() as usize;
    let grid = w.grid().clone();
    let n = w.n();
    let mut h_diag = vec![1.0; r];
    for k in 0..n {
        let v = w.component(k).get(node);
        h_diag[k] = v.exp();
        h_diag[r - 1 - k] = (-v).exp();
    }
    let mut theta = DMatrix::zeros(r, r);
    for i in 0..r - 1 {
        theta[(i + 1, i)] = Complex64::new(1.0, 0.0);
    }
    // Corner entry: |beta|^2 = |q|_g^2; the phase drops out of every
    // gauge-invariant quantity used here, so the positive root is taken.
    theta[(0, r - 1)] = Complex64::new(ctx.q_sq.get(node).sqrt(), 0.0);
    CyclicHiggsSample {
        r,
        theta,
        h_diag,
        point: grid.z_of(node),
    }
}

/// Nodewise |[theta, theta*_h]|_h.
pub fn commutator_field(
    w: &TodaField,
    q: &RDifferential,
    metric: &BackgroundMetric,
) -> Result<ScalarField> {
    let grid = w.grid().clone();
    let ctx = RhsContext::new(q, metric, &grid)?;
    let mut vals = Vec::with_capacity(grid.node_count());
    for c in grid.all_nodes() {
        let s = build_sample(w, &ctx, c);
        vals.push(s.norm_sq(&s.commutator()).sqrt());
    }
    ScalarField::from_values(grid, vals)
}

/// Nodewise |theta|^2_{h,g}.
pub fn theta_norm_sq_field(
    w: &TodaField,
    q: &RDifferential,
    metric: &BackgroundMetric,
) -> Result<ScalarField> {
    let grid = w.grid().clone();
    let ctx = RhsContext::new(q, metric, &grid)?;
    let mut vals = Vec::with_capacity(grid.node_count());
    for c in grid.all_nodes() {
        let s = build_sample(w, &ctx, c);
        vals.push(s.theta_norm_sq());
    }
    ScalarField::from_values(grid, vals)
}

/// The contracted self-duality residual per extended component:
/// i Lambda (R(h) + [theta, theta*]) on v_i, namely
/// -(r+1-2i)/2 k_g - 2 lap_g w_i + 2 [theta, theta*]_{ii}.
/// Equals -2 (lap_g w_i - F_i) componentwise.
pub fn hitchin_residual(
    w: &TodaField,
    q: &RDifferential,
    metric: &BackgroundMetric,
) -> Result<Vec<ScalarField>> {
    let grid = w.grid().clone();
    let ctx = RhsContext::new(q, metric, &grid)?;
    let curvature = gaussian_curvature(metric, &grid)?;
    let extended = w.extended();
    let r = w.r() as usize;
    let laps: Vec<ScalarField> = extended
        .iter()
        .map(|f| laplacian_g(f, metric))
        .collect::<Result<Vec<_>>>()?;
    let mut out: Vec<Vec<f64>> = vec![vec![0.0; grid.node_count()]; r];
    for &c in grid.interior_nodes() {
        let c = c as usize;
        let s = build_sample(w, &ctx, c);
        let comm = s.commutator();
        for i in 0..r {
            let weight = (r as f64 + 1.0 - 2.0 * (i as f64 + 1.0)) / 2.0;
            out[i][c] = -weight * curvature.get(c) - 2.0 * laps[i].get(c)
                + 2.0 * comm[(i, i)].re;
        }
    }
    out.into_iter()
        .map(|v| ScalarField::from_values(grid.clone(), v))
        .collect()
}

/// Sectional curvature samples of the target along the harmonic map:
/// K = -(1/(2r)) |[theta, theta*]|^2 / (|theta|^4 - |tr theta^2|^2).
/// Nodes where the denominator degenerates (the equality regime) are
/// flagged and carry no curvature value.
pub struct PullbackCurvature {
    pub field: ScalarField,
    pub flagged: Vec<usize>,
}

pub fn pullback_curvature(
    w: &TodaField,
    q: &RDifferential,
    metric: &BackgroundMetric,
) -> Result<PullbackCurvature> {
    let grid = w.grid().clone();
    let ctx = RhsContext::new(q, metric, &grid)?;
    let r = w.r() as f64;
    let mut vals = vec![0.0; grid.node_count()];
    let mut flagged = Vec::new();
    for c in grid.all_nodes() {
        let s = build_sample(w, &ctx, c);
        let comm_sq = s.norm_sq(&s.commutator());
        let theta_sq = s.theta_norm_sq();
        let theta2 = &s.theta * &s.theta;
        let tr: Complex64 = (0..s.r).map(|i| theta2[(i, i)]).sum();
        let denom = theta_sq * theta_sq - tr.norm_sqr();
        if denom <= 1e-12 * theta_sq * theta_sq {
            flagged.push(c);
            continue;
        }
        vals[c] = -comm_sq / (2.0 * r * denom);
    }
    Ok(PullbackCurvature {
        field: ScalarField::from_values(grid, vals)?,
        flagged,
    })
}

/// Discrete Gaussian curvatures of the derived metrics e^{u_i} g with
/// u_i = w_{i+1} - w_i (extended indices, i = 1..r-1):
/// k_{e^u g} = e^{-u} (k_g - 2 lap_g u). Interior nodes only; boundary
/// entries are zero.
pub fn derived_metric_curvatures(
    w: &TodaField,
    metric: &BackgroundMetric,
) -> Result<Vec<ScalarField>> {
    let grid = w.grid().clone();
    let curvature = gaussian_curvature(metric, &grid)?;
    let extended = w.extended();
    let r = w.r() as usize;
    let mut out = Vec::with_capacity(r - 1);
    for i in 0..r - 1 {
        let u = extended[i + 1].sub(&extended[i])?;
        let lap_u = laplacian_g(&u, metric)?;
        let mut vals = vec![0.0; grid.node_count()];
        for &c in grid.interior_nodes() {
            let c = c as usize;
            vals[c] = (-u.get(c)).exp() * (curvature.get(c) - 2.0 * lap_u.get(c));
        }
        out.push(ScalarField::from_values(grid.clone(), vals)?);
    }
    Ok(out)
}

/// Defect of the standard harmonic-bundle inequality
/// lap_g log|theta|^2 - |[theta,theta*]|^2/|theta|^2 - k_g/2, evaluated
/// discretely on interior nodes (nonnegative up to O(h^2) for solutions).
pub fn simpson_defect(
    w: &TodaField,
    q: &RDifferential,
    metric: &BackgroundMetric,
) -> Result<ScalarField> {
    let grid = w.grid().clone();
    let ctx = RhsContext::new(q, metric, &grid)?;
    let g0 = metric.g0_field(&grid)?;
    let curvature = gaussian_curvature(metric, &grid)?;
    let mut theta_sq = Vec::with_capacity(grid.node_count());
    let mut comm_sq = Vec::with_capacity(grid.node_count());
    for c in grid.all_nodes() {
        let s = build_sample(w, &ctx, c);
        theta_sq.push(s.theta_norm_sq());
        comm_sq.push(s.norm_sq(&s.commutator()));
    }
    let log_theta =
        ScalarField::from_values(grid.clone(), theta_sq.iter().map(|v| v.ln()).collect())?;
    let lap = flat_laplacian(&log_theta);
    let mut vals = vec![0.0; grid.node_count()];
    for &c in grid.interior_nodes() {
        let c = c as usize;
        vals[c] = lap.get(c) / (4.0 * g0.get(c)) - comm_sq[c] / theta_sq[c]
            - 0.5 * curvature.get(c);
    }
    ScalarField::from_values(grid, vals)
}

/// Cross-check helper: |[M, M^H]|_F in the orthonormalized frame, which
/// must agree with the weighted computation.
pub fn dense_commutator_check(sample: &CyclicHiggsSample) -> (f64, f64) {
    let m = sample.unit_frame();
    let adj = m.adjoint();
    let comm = &m * &adj - adj * &m;
    let dense = comm.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let weighted = sample.norm_sq(&sample.commutator()).sqrt();
    (dense, weighted)
}

/// The closed-form |theta|^2 from the solution exponentials, for identity
/// tests: sum e^{w_{i+1}-w_i} + e^{w_1-w_r} |q|_g^2.
pub fn theta_norm_sq_closed_form(
    w: &TodaField,
    q: &RDifferential,
    metric: &BackgroundMetric,
) -> Result<ScalarField> {
    let grid = w.grid().clone();
    let ctx = RhsContext::new(q, metric, &grid)?;
    let extended = w.extended();
    let r = w.r() as usize;
    let mut vals = Vec::with_capacity(grid.node_count());
    for c in grid.all_nodes() {
        let mut total = 0.0;
        for i in 0..r - 1 {
            total += (extended[i + 1].get(c) - extended[i].get(c)).exp();
        }
        total += (extended[0].get(c) - extended[r - 1].get(c)).exp() * ctx.q_sq.get(c);
        vals.push(total);
    }
    ScalarField::from_values(grid, vals)
}

/// Convenience context pairing a field with its problem data.
pub fn rhs_context(
    w: &TodaField,
    q: &RDifferential,
    metric: &BackgroundMetric,
) -> Result<RhsContext> {
    let grid: &Arc<DomainGrid> = w.grid();
    RhsContext::new(q, metric, grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::grid::Region;
    use crate::toda::{base_solution, q_solution, rhs_real};

    fn unit_disk(h: f64) -> Arc<DomainGrid> {
        Arc::new(DomainGrid::new(Region::disk(1.0), h).unwrap())
    }

    #[test]
    fn sample_r2_hand_check() {
        // r = 2, w = 0, |q|_g = 1: theta = [[0, 1], [1, 0]] in the unit
        // frame and the commutator vanishes (the equality regime).
        let grid = unit_disk(0.2);
        let metric = BackgroundMetric::Euclidean;
        let q = RDifferential::monomial(2, 0);
        let w = TodaField::constants(2, grid.clone(), &[0.0]).unwrap();
        let ctx = rhs_context(&w, &q, &metric).unwrap();
        let s = build_sample(&w, &ctx, 0);
        assert_eq!(s.h_diag, vec![1.0, 1.0]);
        assert!((s.theta[(0, 1)].re - 1.0).abs() < 1e-14);
        assert!(s.norm_sq(&s.commutator()) < 1e-26);
        assert!((s.theta_norm_sq() - 2.0).abs() < 1e-13);
    }

    #[test]
    fn nilpotent_for_zero_differential() {
        let grid = unit_disk(0.2);
        let metric = BackgroundMetric::poincare_disk(1.0);
        let q = RDifferential::zero(5);
        let w = base_solution(5, &metric, &grid).unwrap();
        let ctx = rhs_context(&w, &q, &metric).unwrap();
        let s = build_sample(&w, &ctx, 0);
        assert_eq!(s.theta[(0, 4)].norm(), 0.0);
        // h product is 1 for reality-extended tuples.
        let prod: f64 = s.h_diag.iter().product();
        assert!((prod - 1.0).abs() < 1e-10);
        // The base-case commutator is strictly positive.
        let comm = commutator_field(&w, &q, &metric).unwrap();
        assert!(comm.min_value() > 0.0);
    }

    #[test]
    fn equality_case_commutator_vanishes() {
        // The logarithmic solution of a nonvanishing differential is the
        // equality regime: the commutator is identically zero.
        let grid = Arc::new(DomainGrid::new(Region::annulus(1.0, 3.0), 0.05).unwrap());
        let metric = BackgroundMetric::Euclidean;
        let q = RDifferential::with_laurent(2, vec![Complex64::new(1.0, 0.0)], 2).unwrap();
        let w = q_solution(&q, &metric, &grid).unwrap();
        let comm = commutator_field(&w, &q, &metric).unwrap();
        assert!(comm.sup_norm() < 1e-12, "commutator {}", comm.sup_norm());
    }

    #[test]
    fn weighted_commutator_matches_unit_frame() {
        let grid = unit_disk(0.2);
        let metric = BackgroundMetric::poincare_disk(1.0);
        for r in [2u32, 3, 5, 8] {
            let q = RDifferential::monomial(r, 1);
            let n = (r / 2) as usize;
            let comps: Vec<ScalarField> = (0..n)
                .map(|k| {
                    ScalarField::from_fn(grid.clone(), move |z| {
                        0.4 * (z.re * (k + 1) as f64).cos() - 0.2 * z.im
                    })
                })
                .collect();
            let w = TodaField::new(r, comps).unwrap();
            let ctx = rhs_context(&w, &q, &metric).unwrap();
            for c in [0usize, 7, grid.node_count() / 2] {
                let s = build_sample(&w, &ctx, c);
                let (dense, weighted) = dense_commutator_check(&s);
                assert!(
                    (dense - weighted).abs() <= 1e-12 * dense.max(1.0),
                    "r={r}: {dense} vs {weighted}"
                );
            }
        }
    }

    #[test]
    fn residual_identity_against_toda_defect() {
        // The contracted self-duality residual equals -2 (lap_g w - F)
        // componentwise, with the defect extended antisymmetrically.
        let grid = unit_disk(0.1);
        let metric = BackgroundMetric::poincare_disk(1.0);
        for r in [2u32, 4, 5] {
            let q = RDifferential::monomial(r, 1);
            let n = (r / 2) as usize;
            let comps: Vec<ScalarField> = (0..n)
                .map(|k| {
                    ScalarField::from_fn(grid.clone(), move |z| {
                        0.3 * (z.norm_sqr() - 0.2 * k as f64)
                    })
                })
                .collect();
            let w = TodaField::new(r, comps).unwrap();
            let hres = hitchin_residual(&w, &q, &metric).unwrap();
            let ctx = rhs_context(&w, &q, &metric).unwrap();
            let rhs = rhs_real(&w, &ctx).unwrap();
            let g0 = metric.g0_field(&grid).unwrap();
            for k in 0..n {
                let lap = flat_laplacian(w.component(k));
                for &c in grid.interior_nodes() {
                    let c = c as usize;
                    let toda_defect = lap.get(c) / (4.0 * g0.get(c)) - rhs[k].get(c);
                    let expected = -2.0 * toda_defect;
                    let got = hres[k].get(c);
                    assert!(
                        (got - expected).abs() <= 1e-10 * (1.0 + expected.abs()),
                        "r={r} k={k}: {got} vs {expected}"
                    );
                }
            }
            // Antisymmetry of the extended residual components.
            for i in 0..(r as usize) {
                let mirror = r as usize - 1 - i;
                for &c in grid.interior_nodes() {
                    let c = c as usize;
                    let sum = hres[i].get(c) + hres[mirror].get(c);
                    assert!(sum.abs() < 1e-10 * (1.0 + hres[i].get(c).abs()));
                }
            }
        }
    }

    #[test]
    fn theta_norm_closed_form_identity() {
        let grid = unit_disk(0.2);
        let metric = BackgroundMetric::poincare_disk(1.0);
        let q = RDifferential::monomial(4, 2);
        let comps: Vec<ScalarField> = (0..2)
            .map(|k| ScalarField::from_fn(grid.clone(), move |z| 0.1 * z.re + 0.05 * k as f64))
            .collect();
        let w = TodaField::new(4, comps).unwrap();
        let direct = theta_norm_sq_field(&w, &q, &metric).unwrap();
        let closed = theta_norm_sq_closed_form(&w, &q, &metric).unwrap();
        let dev = direct.sub(&closed).unwrap().sup_norm();
        assert!(dev < 1e-12, "norm identity defect {dev}");
    }

    #[test]
    fn base_case_curvature_negative_and_bounded() {
        let grid = unit_disk(0.05);
        let metric = BackgroundMetric::poincare_disk(1.0);
        let q = RDifferential::zero(2);
        let w = base_solution(2, &metric, &grid).unwrap();
        let pk = pullback_curvature(&w, &q, &metric).unwrap();
        assert!(pk.flagged.is_empty());
        for c in grid.all_nodes() {
            assert!(pk.field.get(c) < 0.0);
        }
        // Derived metric curvature >= -4 (exactly -2 for the r = 2 base:
        // 4 (|q|^2 e^{2w} - e^{-2w})/e^{-2w} = -4 |q|^2... with q = 0 the
        // formula gives e^{2w}(k_g - 2 lap(-2w)) = 4 (0 - e^{-2w}) / e^{-2w}.
        let curv = derived_metric_curvatures(&w, &metric).unwrap();
        for &c in grid.interior_nodes() {
            let v = curv[0].get(c as usize);
            assert!(v >= -4.0 - 1e-10, "curvature {v}");
        }
    }

    #[test]
    fn equality_case_curvature_flagged() {
        // In the equality regime the denominator |theta|^4 - |tr theta^2|^2
        // degenerates for r = 2 and the node is flagged.
        let grid = Arc::new(DomainGrid::new(Region::annulus(1.0, 2.0), 0.1).unwrap());
        let metric = BackgroundMetric::Euclidean;
        let q = RDifferential::with_laurent(2, vec![Complex64::new(1.0, 0.0)], 2).unwrap();
        let w = q_solution(&q, &metric, &grid).unwrap();
        let pk = pullback_curvature(&w, &q, &metric).unwrap();
        assert_eq!(pk.flagged.len(), grid.node_count());
    }

    #[test]
    fn simpson_defect_nonnegative_for_solutions() {
        // Exact solution (logarithmic field on an annulus): the inequality
        // holds up to discretization.
        let grid = Arc::new(DomainGrid::new(Region::annulus(0.8, 2.0), 0.02).unwrap());
        let metric = BackgroundMetric::Euclidean;
        let q = RDifferential::monomial(3, 1);
        let w = q_solution(&q, &metric, &grid).unwrap();
        let defect = simpson_defect(&w, &q, &metric).unwrap();
        let mut min_val = f64::INFINITY;
        for &c in grid.interior_nodes() {
            min_val = min_val.min(defect.get(c as usize));
        }
        assert!(min_val > -1e-3, "inequality defect {min_val}");
    }
}
