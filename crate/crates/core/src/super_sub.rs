//! Construction, combination and verification of super/subsolutions.
//!
//! A supersolution satisfies lap_g w_k <= F_k weakly, a subsolution the
//! opposite inequality. Verification is discretization-aware: a node
//! passes when its defect stays within slack + 10 h^2 |F_k| of the right
//! sign. Pointwise minima of supersolutions (maxima of subsolutions) keep
//! the property; at seam nodes, where the active branch switches, the
//! symmetric stencil is meaningless, so seams are skipped in the combined
//! check and each branch is re-checked on a one-node collar instead.

use std::collections::HashSet;
use std::sync::Arc;

use serde::Serialize;

use crate::differential::RDifferential;
use crate::error::{Error, Result};
use crate::geometry::field::ScalarField;
use crate::geometry::grid::DomainGrid;
use crate::geometry::metric::BackgroundMetric;
use crate::geometry::ops::flat_laplacian;
use crate::toda::{base_values, rhs_real, rhs_scale, RhsContext, TodaField};

/// A verified (sub, super) pair on a common grid.
#[derive(Debug, Clone)]
pub struct OrderedPair {
    pub sub: TodaField,
    pub sup: TodaField,
}

impl OrderedPair {
    /// Requires sub <= sup + tol componentwise on all masked nodes.
    pub fn new(sub: TodaField, sup: TodaField, tol: f64) -> Result<OrderedPair> {
        if !sub.le_within(&sup, tol)? {
            let mut worst = 0.0f64;
            for k in 0..sub.n() {
                let d = sub.component(k).sub(sup.component(k))?.max_value();
                worst = worst.max(d);
            }
            return Err(Error::BoxViolation(worst));
        }
        Ok(OrderedPair { sub, sup })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyEquation {
    pub equation_index: usize,
    pub checked: usize,
    pub violations: usize,
    /// Worst signed excess over the allowance (negative when passing).
    pub worst_excess: f64,
    pub worst_node: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub equations: Vec<VerifyEquation>,
    pub skipped_nodes: usize,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.equations.iter().all(|e| e.violations == 0)
    }

    pub fn worst_excess(&self) -> f64 {
        self.equations
            .iter()
            .fold(f64::NEG_INFINITY, |m, e| m.max(e.worst_excess))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Super,
    Sub,
}

fn verify_side(
    w: &TodaField,
    ctx: &RhsContext,
    g0: &ScalarField,
    slack: f64,
    skip: &HashSet<usize>,
    side: Side,
) -> Result<VerifyReport> {
    let grid = w.grid().clone();
    let rhs = rhs_real(w, ctx)?;
    let scale = rhs_scale(w, ctx)?;
    let h2 = grid.spacing * grid.spacing;
    let mut equations = Vec::with_capacity(w.n());
    for k in 0..w.n() {
        let lap = flat_laplacian(w.component(k));
        let mut checked = 0usize;
        let mut violations = 0usize;
        let mut worst = f64::NEG_INFINITY;
        let mut worst_node = None;
        for &c in grid.interior_nodes() {
            let c = c as usize;
            if skip.contains(&c) {
                continue;
            }
            checked += 1;
            let f = rhs[k].get(c);
            let defect = lap.get(c) / (4.0 * g0.get(c)) - f;
            let allowance = slack + 10.0 * h2 * scale[k].get(c);
            let excess = match side {
                Side::Super => defect - allowance,
                Side::Sub => -defect - allowance,
            };
            if excess > 0.0 {
                violations += 1;
            }
            if excess > worst {
                worst = excess;
                worst_node = Some(c);
            }
        }
        equations.push(VerifyEquation {
            equation_index: k + 1,
            checked,
            violations,
            worst_excess: worst,
            worst_node,
        });
    }
    Ok(VerifyReport {
        equations,
        skipped_nodes: skip.len(),
    })
}

/// Check lap_g w_k <= F_k + allowance at interior nodes not in `skip`.
pub fn verify_supersolution(
    w: &TodaField,
    ctx: &RhsContext,
    g0: &ScalarField,
    slack: f64,
    skip: &[usize],
) -> Result<VerifyReport> {
    verify_side(w, ctx, g0, slack, &skip.iter().copied().collect(), Side::Super)
}

/// Check lap_g w_k >= F_k - allowance at interior nodes not in `skip`.
pub fn verify_subsolution(
    w: &TodaField,
    ctx: &RhsContext,
    g0: &ScalarField,
    slack: f64,
    skip: &[usize],
) -> Result<VerifyReport> {
    verify_side(w, ctx, g0, slack, &skip.iter().copied().collect(), Side::Sub)
}

/// Convenience wrappers building the context from (q, metric).
pub fn verify_supersolution_for(
    w: &TodaField,
    q: &RDifferential,
    metric: &BackgroundMetric,
    slack: f64,
) -> Result<VerifyReport> {
    let grid = w.grid().clone();
    let ctx = RhsContext::new(q, metric, &grid)?;
    let g0 = metric.g0_field(&grid)?;
    verify_supersolution(w, &ctx, &g0, slack, &[])
}

pub fn verify_subsolution_for(
    w: &TodaField,
    q: &RDifferential,
    metric: &BackgroundMetric,
    slack: f64,
) -> Result<VerifyReport> {
    let grid = w.grid().clone();
    let ctx = RhsContext::new(q, metric, &grid)?;
    let g0 = metric.g0_field(&grid)?;
    verify_subsolution(w, &ctx, &g0, slack, &[])
}

/// Result of a pointwise min/max combination: the combined field, the seam
/// nodes (interior nodes whose stencil mixes branches), and the inputs for
/// collar re-checks.
#[derive(Debug, Clone)]
pub struct Glued {
    pub field: TodaField,
    pub seams: Vec<usize>,
    pub branches: Vec<TodaField>,
    /// Node validity per branch (all-true for total branches).
    pub validity: Vec<Vec<bool>>,
}

impl Glued {
    /// Seam nodes plus their interior stencil neighbours.
    pub fn collar(&self) -> Vec<usize> {
        let grid = self.field.grid().clone();
        let seams: HashSet<usize> = self.seams.iter().copied().collect();
        let mut collar: HashSet<usize> = seams.clone();
        for (k, &c) in grid.interior_nodes().iter().enumerate() {
            if seams.contains(&(c as usize)) {
                for nb in grid.stencil(k) {
                    collar.insert(nb as usize);
                }
            }
        }
        let mut v: Vec<usize> = collar.into_iter().collect();
        v.sort_unstable();
        v
    }

    /// Verify the combined field as a supersolution: the symmetric check
    /// away from seams, plus each branch's own inequality on the collar
    /// (where the branch and its stencil are valid).
    pub fn verify_supersolution(
        &self,
        ctx: &RhsContext,
        g0: &ScalarField,
        slack: f64,
    ) -> Result<VerifyReport> {
        self.verify_combined(ctx, g0, slack, Side::Super)
    }

    pub fn verify_subsolution(
        &self,
        ctx: &RhsContext,
        g0: &ScalarField,
        slack: f64,
    ) -> Result<VerifyReport> {
        self.verify_combined(ctx, g0, slack, Side::Sub)
    }

    fn verify_combined(
        &self,
        ctx: &RhsContext,
        g0: &ScalarField,
        slack: f64,
        side: Side,
    ) -> Result<VerifyReport> {
        let skip: HashSet<usize> = self.seams.iter().copied().collect();
        let mut report = verify_side(&self.field, ctx, g0, slack, &skip, side)?;
        // Collar: each branch must satisfy its own inequality where valid.
        let grid = self.field.grid().clone();
        let collar: HashSet<usize> = self.collar().into_iter().collect();
        for (branch, valid) in self.branches.iter().zip(&self.validity) {
            let rhs = rhs_real(branch, ctx)?;
            let scale = rhs_scale(branch, ctx)?;
            let h2 = grid.spacing * grid.spacing;
            for k in 0..branch.n() {
                let lap = flat_laplacian(branch.component(k));
                for (ord, &c) in grid.interior_nodes().iter().enumerate() {
                    let c = c as usize;
                    if !collar.contains(&c) || !valid[c] {
                        continue;
                    }
                    if grid.stencil(ord).iter().any(|&nb| !valid[nb as usize]) {
                        continue;
                    }
                    let f = rhs[k].get(c);
                    let defect = lap.get(c) / (4.0 * g0.get(c)) - f;
                    let allowance = slack + 10.0 * h2 * scale[k].get(c);
                    let excess = match side {
                        Side::Super => defect - allowance,
                        Side::Sub => -defect - allowance,
                    };
                    let eq = &mut report.equations[k];
                    eq.checked += 1;
                    if excess > 0.0 {
                        eq.violations += 1;
                    }
                    if excess > eq.worst_excess {
                        eq.worst_excess = excess;
                        eq.worst_node = Some(c);
                    }
                }
            }
        }
        Ok(report)
    }
}

fn combine(
    branches: &[TodaField],
    validity: Option<Vec<Vec<bool>>>,
    take_min: bool,
) -> Result<Glued> {
    if branches.is_empty() {
        return Err(Error::Config("no branches to combine".into()));
    }
    let r = branches[0].r();
    let n = branches[0].n();
    let grid = branches[0].grid().clone();
    for b in branches {
        if b.r() != r {
            return Err(Error::Config("branch order mismatch".into()));
        }
        b.component(0).check_same_grid(branches[0].component(0))?;
    }
    let validity = validity
        .unwrap_or_else(|| vec![vec![true; grid.node_count()]; branches.len()]);
    if validity.len() != branches.len()
        || validity.iter().any(|v| v.len() != grid.node_count())
    {
        return Err(Error::Config("validity mask shape mismatch".into()));
    }

    // Componentwise combination; active branch recorded per component.
    let mut active: Vec<Vec<u8>> = vec![vec![0; grid.node_count()]; n];
    let mut components = Vec::with_capacity(n);
    for k in 0..n {
        let mut vals = Vec::with_capacity(grid.node_count());
        for c in grid.all_nodes() {
            let mut best: Option<(f64, u8)> = None;
            for (bi, b) in branches.iter().enumerate() {
                if !validity[bi][c] {
                    continue;
                }
                let v = b.component(k).get(c);
                let better = match best {
                    None => true,
                    Some((bv, _)) => {
                        if take_min {
                            v < bv
                        } else {
                            v > bv
                        }
                    }
                };
                if better {
                    best = Some((v, bi as u8));
                }
            }
            let (v, bi) = best.ok_or_else(|| {
                Error::Config(format!("no valid branch at node {c}"))
            })?;
            vals.push(v);
            active[k][c] = bi;
        }
        components.push(ScalarField::from_values(grid.clone(), vals)?);
    }
    // Seams: interior nodes whose stencil mixes active branches in any
    // component.
    let mut seams = Vec::new();
    for (ord, &c) in grid.interior_nodes().iter().enumerate() {
        let c = c as usize;
        let mixes = (0..n).any(|k| {
            grid.stencil(ord)
                .iter()
                .any(|&nb| active[k][nb as usize] != active[k][c])
        });
        if mixes {
            seams.push(c);
        }
    }
    Ok(Glued {
        field: TodaField::new(r, components)?,
        seams,
        branches: branches.to_vec(),
        validity,
    })
}

/// Pointwise componentwise minimum of supersolutions.
pub fn combine_min(branches: &[TodaField]) -> Result<Glued> {
    combine(branches, None, true)
}

/// Pointwise componentwise maximum of subsolutions.
pub fn combine_max(branches: &[TodaField]) -> Result<Glued> {
    combine(branches, None, false)
}

/// Min over partially defined branches (validity mask per branch).
pub fn combine_min_partial(
    branches: &[TodaField],
    validity: Vec<Vec<bool>>,
) -> Result<Glued> {
    combine(branches, Some(validity), true)
}

pub fn combine_max_partial(
    branches: &[TodaField],
    validity: Vec<Vec<bool>>,
) -> Result<Glued> {
    combine(branches, Some(validity), false)
}

/// Shift every component by c: a supersolution for c >= 0 applied to a
/// (numerical) solution, a subsolution for c <= 0.
pub fn shift_solution(w: &TodaField, c: f64) -> TodaField {
    w.shifted(c)
}

/// The constant subsolution of the reduced system on a curvature -1
/// metric, derived from the doubling parameter E:
/// a_n = -log(nE), a_{k+1} - a_k = log(kE), xi_l = a_l + (r+1-2l) log 2.
#[derive(Debug, Clone)]
pub struct SubsolutionConstants {
    pub field: TodaField,
    pub e_constant: f64,
    pub offsets: Vec<f64>,
}

/// Constant values xi_1..xi_n for a given E in the metric frame.
pub fn subsolution_values(r: u32, e_constant: f64) -> Vec<f64> {
    let n = (r / 2) as usize;
    let mut a = vec![0.0; n];
    a[n - 1] = -(n as f64 * e_constant).ln();
    for k in (1..n).rev() {
        a[k - 1] = a[k] - (k as f64 * e_constant).ln();
    }
    (0..n)
        .map(|idx| {
            let l = idx as f64 + 1.0;
            a[idx] + (r as f64 + 1.0 - 2.0 * l) * 2f64.ln()
        })
        .collect()
}

/// Build verified constant subsolutions by doubling E until the discrete
/// subsolution check passes and the field sits strictly below the base
/// supersolution.
pub fn subsolution_constants(
    r: u32,
    metric: &BackgroundMetric,
    grid: &Arc<DomainGrid>,
    q: &RDifferential,
) -> Result<SubsolutionConstants> {
    if !metric.is_hyperbolic() {
        return Err(Error::UnsupportedMetric(format!(
            "subsolution constants need a curvature -1 metric, got {}",
            metric.kind_name()
        )));
    }
    let ctx = RhsContext::new(q, metric, grid)?;
    let g0 = metric.g0_field(grid)?;
    let base = base_values(r);
    let mut e_constant = (r as f64).max(4.0);
    let limit = 2f64.powi(60);
    while e_constant <= limit {
        let values = subsolution_values(r, e_constant);
        let below_base = values
            .iter()
            .zip(&base)
            .all(|(xi, b)| *xi < b - 0.05);
        if below_base {
            let field = TodaField::constants(r, grid.clone(), &values)?;
            let report = verify_subsolution(&field, &ctx, &g0, 1e-10, &[])?;
            if report.passed() {
                return Ok(SubsolutionConstants {
                    field,
                    e_constant,
                    offsets: values,
                });
            }
        }
        e_constant *= 2.0;
    }
    Err(Error::ConstructionFailure)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::grid::Region;
    use crate::toda::base_solution;

    fn unit_disk(h: f64) -> Arc<DomainGrid> {
        Arc::new(DomainGrid::new(Region::disk(1.0), h).unwrap())
    }

    #[test]
    fn base_is_a_supersolution_for_nonzero_q() {
        let grid = unit_disk(0.05);
        let metric = BackgroundMetric::poincare_disk(1.0);
        for r in [2u32, 3, 4, 5] {
            let q = RDifferential::monomial(r, 1);
            let base = base_solution(r, &metric, &grid).unwrap();
            let report = verify_supersolution_for(&base, &q, &metric, 1e-12).unwrap();
            assert!(report.passed(), "r = {r}: {:?}", report.equations);
        }
    }

    #[test]
    fn perturbed_base_fails_supersolution() {
        let grid = unit_disk(0.05);
        let metric = BackgroundMetric::poincare_disk(1.0);
        let base = base_solution(4, &metric, &grid).unwrap();
        let mut bad = base.clone();
        *bad.component_mut(0) = base.component(0).shifted(-1.0);
        let report =
            verify_supersolution_for(&bad, &RDifferential::zero(4), &metric, 1e-12).unwrap();
        assert!(!report.passed());
    }

    #[test]
    fn q_solution_verifies_both_ways_away_from_zeros() {
        // The logarithmic solution is exact away from zeros, so it passes
        // both checks with the h^2-scaled allowance.
        let grid = Arc::new(DomainGrid::new(Region::annulus(0.5, 2.0), 0.02).unwrap());
        let metric = BackgroundMetric::Euclidean;
        let q = RDifferential::monomial(3, 1);
        let w = crate::toda::q_solution(&q, &metric, &grid).unwrap();
        let sup = verify_supersolution_for(&w, &q, &metric, 1e-6).unwrap();
        let sub = verify_subsolution_for(&w, &q, &metric, 1e-6).unwrap();
        assert!(sup.passed(), "{:?}", sup.equations);
        assert!(sub.passed(), "{:?}", sub.equations);
    }

    #[test]
    fn shift_of_solution_has_one_sided_sign() {
        let grid = unit_disk(0.05);
        let metric = BackgroundMetric::poincare_disk(1.0);
        let q = RDifferential::zero(2);
        let w = base_solution(2, &metric, &grid).unwrap();
        let up = shift_solution(&w, 0.1);
        let down = shift_solution(&w, -0.1);
        assert!(verify_supersolution_for(&up, &q, &metric, 1e-12)
            .unwrap()
            .passed());
        assert!(verify_subsolution_for(&down, &q, &metric, 1e-12)
            .unwrap()
            .passed());
        // And the wrong sides fail.
        assert!(!verify_subsolution_for(&up, &q, &metric, 1e-12)
            .unwrap()
            .passed());
        assert!(!verify_supersolution_for(&down, &q, &metric, 1e-12)
            .unwrap()
            .passed());
    }

    #[test]
    fn min_is_idempotent_and_records_no_seams() {
        let grid = unit_disk(0.1);
        let metric = BackgroundMetric::poincare_disk(1.0);
        let w = base_solution(4, &metric, &grid).unwrap();
        let glued = combine_min(&[w.clone(), w.clone()]).unwrap();
        assert_eq!(glued.field.sup_distance(&w).unwrap(), 0.0);
        assert!(glued.seams.is_empty());
    }

    #[test]
    fn min_of_supersolutions_verifies_with_seams() {
        // Two oppositely tilted nonnegative shifts of the exact base:
        // base + 0.3 +- 0.2x. Shifting a solution up by a nonnegative
        // function with vanishing flat Laplacian keeps the supersolution
        // inequality, and the min switches branch across x = 0.
        let grid = unit_disk(0.05);
        let metric = BackgroundMetric::poincare_disk(1.0);
        let q = RDifferential::zero(2);
        let base = base_solution(2, &metric, &grid).unwrap();
        let tilted = |sign: f64| -> TodaField {
            TodaField::new(
                2,
                vec![base
                    .component(0)
                    .add(&ScalarField::from_fn(grid.clone(), move |z| {
                        0.3 + sign * 0.2 * z.re
                    }))
                    .unwrap()],
            )
            .unwrap()
        };
        let a = tilted(1.0);
        let b = tilted(-1.0);
        let ctx = RhsContext::new(&q, &metric, &grid).unwrap();
        let g0 = metric.g0_field(&grid).unwrap();
        for branch in [&a, &b] {
            let rep = verify_supersolution(branch, &ctx, &g0, 1e-12, &[]).unwrap();
            assert!(rep.passed(), "{:?}", rep.equations);
        }
        let glued = combine_min(&[a, b]).unwrap();
        assert!(!glued.seams.is_empty(), "branches must actually switch");
        let report = glued.verify_supersolution(&ctx, &g0, 1e-12).unwrap();
        assert!(report.passed(), "{:?}", report.equations);
        // The combined field equals base + 0.3 - 0.2|x|.
        for c in grid.all_nodes() {
            let z = grid.z_of(c);
            let expect = base.component(0).get(c) + 0.3 - 0.2 * z.re.abs();
            assert!((glued.field.component(0).get(c) - expect).abs() < 1e-13);
        }
    }

    #[test]
    fn max_dual_of_min() {
        let grid = unit_disk(0.1);
        let a = TodaField::constants(2, grid.clone(), &[0.0]).unwrap();
        let b = TodaField::new(
            2,
            vec![ScalarField::from_fn(grid.clone(), |z| 0.3 * z.re)],
        )
        .unwrap();
        let mx = combine_max(&[a.clone(), b.clone()]).unwrap();
        for c in grid.all_nodes() {
            let expect = (0.0f64).max(0.3 * grid.z_of(c).re);
            assert!((mx.field.component(0).get(c) - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn subsolution_constants_verified_and_ordered() {
        let metric = BackgroundMetric::poincare_disk(1.0);
        let grid = unit_disk(0.05);
        for r in [2u32, 3, 4, 5, 6, 7] {
            let q = RDifferential::monomial(r, 1);
            let sub = subsolution_constants(r, &metric, &grid, &q).unwrap();
            let base = base_solution(r, &metric, &grid).unwrap();
            assert!(sub.field.le_within(&base, -0.05).unwrap(), "strictly below");
            // Doubling E lowers every component.
            let lower = subsolution_values(r, 2.0 * sub.e_constant);
            for (lo, cur) in lower.iter().zip(&sub.offsets) {
                assert!(lo < cur);
            }
            // Pair construction succeeds.
            OrderedPair::new(sub.field.clone(), base, 0.0).unwrap();
        }
    }

    #[test]
    fn subsolution_for_q_zero_small_e() {
        // For q = 0, r = 2 the first doubling candidate already verifies.
        let metric = BackgroundMetric::poincare_disk(1.0);
        let grid = unit_disk(0.1);
        let sub = subsolution_constants(2, &metric, &grid, &RDifferential::zero(2)).unwrap();
        assert!(sub.e_constant <= 8.0);
    }

    #[test]
    fn ordered_pair_rejects_crossing() {
        let grid = unit_disk(0.1);
        let a = TodaField::constants(2, grid.clone(), &[0.0]).unwrap();
        let b = TodaField::constants(2, grid.clone(), &[-0.5]).unwrap();
        assert!(OrderedPair::new(a.clone(), b.clone(), 0.0).is_err());
        assert!(OrderedPair::new(b, a, 0.0).is_ok());
    }
}
