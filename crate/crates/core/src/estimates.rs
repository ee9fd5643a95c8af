//! The estimate suite: every closed-form bound known for complete
//! solutions, evaluated on a produced field and reported with margins.

use serde::Serialize;

use crate::differential::RDifferential;
use crate::error::Result;
use crate::geometry::metric::BackgroundMetric;
use crate::geometry::ops::q_norm_sq;
use crate::hitchin::{derived_metric_curvatures, pullback_curvature, simpson_defect};
use crate::iteration::reframe_to;
use crate::toda::{ratio_bound_constants, residual, EquationResidual, TodaField};

/// Margins of the strict case-(i) bounds. Positive `*_excess` values mean
/// a violation of that size.
#[derive(Debug, Clone, Serialize)]
pub struct CaseOneReport {
    /// max over nodes of w_k + ((r+1-2k)/r) log |q|_g, away from zeros.
    pub log_bound_excess: f64,
    /// max of e^{2 w_1} |q|_g^2 / e^{-w_1+w_2} (must stay below 1).
    pub first_ratio_max: f64,
    /// Per k = 2..n: (min, max) of e^{-w_{k-1}+w_k} / e^{-w_k+w_{k+1}}.
    pub ratio_ranges: Vec<(f64, f64)>,
    /// The strict lower bounds (k-1)(r-k+1)/(k(r-k)).
    pub ratio_lower_bounds: Vec<f64>,
    pub checked_nodes: usize,
}

/// Check the strict bounds of the main estimates on nodes with
/// |z - zero| beyond the exclusion radius.
pub fn case_one_bounds(
    w: &TodaField,
    q: &RDifferential,
    metric: &BackgroundMetric,
    exclusion_radius: f64,
) -> Result<CaseOneReport> {
    let grid = w.grid().clone();
    let r = w.r();
    let n = w.n();
    let q_sq = q_norm_sq(q, metric, &grid)?;
    let zeros = if q.is_zero() {
        Vec::new()
    } else {
        q.all_roots()?
    };
    let closing = 2.0 * n as f64 + 2.0 - r as f64;
    let mut log_excess = f64::NEG_INFINITY;
    let mut first_ratio = f64::NEG_INFINITY;
    let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); n.saturating_sub(1)];
    let mut checked = 0usize;
    for c in grid.all_nodes() {
        let z = grid.z_of(c);
        if zeros.iter().any(|&p| (z - p).norm() <= exclusion_radius) {
            continue;
        }
        checked += 1;
        let log_q = 0.5 * q_sq.get(c).ln();
        for k in 1..=n {
            let weight = (r as f64 + 1.0 - 2.0 * k as f64) / r as f64;
            log_excess = log_excess.max(w.component(k - 1).get(c) + weight * log_q);
        }
        let w1 = w.component(0).get(c);
        let out1 = if n == 1 {
            (-closing * w1).exp()
        } else {
            (w.component(1).get(c) - w1).exp()
        };
        first_ratio = first_ratio.max((2.0 * w1).exp() * q_sq.get(c) / out1);
        for k in 2..=n {
            let wk = w.component(k - 1).get(c);
            let num = (wk - w.component(k - 2).get(c)).exp();
            let den = if k == n {
                (-closing * wk).exp()
            } else {
                (w.component(k).get(c) - wk).exp()
            };
            let ratio = num / den;
            let slot = &mut ranges[k - 2];
            slot.0 = slot.0.min(ratio);
            slot.1 = slot.1.max(ratio);
        }
    }
    Ok(CaseOneReport {
        log_bound_excess: log_excess,
        first_ratio_max: first_ratio,
        ratio_ranges: ranges,
        ratio_lower_bounds: ratio_bound_constants(r),
        checked_nodes: checked,
    })
}

/// Completeness lower bounds on the unit disk in the euclidean frame:
/// e^{-w_l + w_{l+1}} >= l(r-l)/(1-|z|^2)^2 for l < n and the closing
/// analogue at l = n. `margins[l-1]` is the worst (most negative) margin.
#[derive(Debug, Clone, Serialize)]
pub struct CompletenessReport {
    pub margins: Vec<f64>,
}

pub fn completeness_bounds(
    w: &TodaField,
    metric: &BackgroundMetric,
) -> Result<CompletenessReport> {
    let tilde = reframe_to(w, metric, &BackgroundMetric::Euclidean)?;
    let grid = tilde.grid().clone();
    let r = w.r();
    let n = w.n();
    let closing = 2.0 * n as f64 + 2.0 - r as f64;
    let mut margins = vec![f64::INFINITY; n];
    for c in grid.all_nodes() {
        let z = grid.z_of(c);
        let bound_scale = (1.0 - z.norm_sqr()).powi(2);
        for l in 1..=n {
            let lhs = if l == n {
                (-closing * tilde.component(n - 1).get(c)).exp()
            } else {
                (tilde.component(l).get(c) - tilde.component(l - 1).get(c)).exp()
            };
            let target = l as f64 * (r as f64 - l as f64) / bound_scale;
            margins[l - 1] = margins[l - 1].min(lhs - target);
        }
    }
    Ok(CompletenessReport { margins })
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvatureReport {
    /// max of the target sectional curvature over unflagged nodes
    /// (negative in the strict regimes).
    pub pullback_max: f64,
    pub pullback_flagged: usize,
    /// min over derived metrics and interior nodes of their Gaussian
    /// curvature (bounded below by -4).
    pub derived_min: f64,
    /// min of the contracted Simpson inequality defect.
    pub simpson_min: f64,
}

pub fn curvature_diagnostics(
    w: &TodaField,
    q: &RDifferential,
    metric: &BackgroundMetric,
) -> Result<CurvatureReport> {
    let grid = w.grid().clone();
    let pk = pullback_curvature(w, q, metric)?;
    let flagged: std::collections::HashSet<usize> = pk.flagged.iter().copied().collect();
    let mut pullback_max = f64::NEG_INFINITY;
    for c in grid.all_nodes() {
        if !flagged.contains(&c) {
            pullback_max = pullback_max.max(pk.field.get(c));
        }
    }
    let derived = derived_metric_curvatures(w, metric)?;
    let mut derived_min = f64::INFINITY;
    for f in &derived {
        for &c in grid.interior_nodes() {
            derived_min = derived_min.min(f.get(c as usize));
        }
    }
    let simpson = simpson_defect(w, q, metric)?;
    let mut simpson_min = f64::INFINITY;
    for &c in grid.interior_nodes() {
        simpson_min = simpson_min.min(simpson.get(c as usize));
    }
    Ok(CurvatureReport {
        pullback_max,
        pullback_flagged: pk.flagged.len(),
        derived_min,
        simpson_min,
    })
}

/// Everything the validation pipeline reports for one solution.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub residuals: Vec<EquationResidual>,
    pub case_one: CaseOneReport,
    pub curvature: CurvatureReport,
    /// Present for hyperbolic-disk solves only.
    pub completeness: Option<CompletenessReport>,
}

pub fn validate(
    w: &TodaField,
    q: &RDifferential,
    metric: &BackgroundMetric,
    exclusion_radius: f64,
) -> Result<ValidationReport> {
    let completeness = if matches!(metric, BackgroundMetric::PoincareDisk { radius, center }
        if (*radius - 1.0).abs() < 1e-12 && center.norm() == 0.0)
    {
        Some(completeness_bounds(w, metric)?)
    } else {
        None
    };
    Ok(ValidationReport {
        residuals: residual(w, q, metric)?,
        case_one: case_one_bounds(w, q, metric, exclusion_radius)?,
        curvature: curvature_diagnostics(w, q, metric)?,
        completeness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::grid::{DomainGrid, Region};
    use crate::iteration::{disk_solve, SolverConfig};
    use std::sync::Arc;

    #[test]
    fn base_case_report_structure() {
        let grid = Arc::new(DomainGrid::new(Region::disk(1.0), 0.1).unwrap());
        let metric = BackgroundMetric::poincare_disk(1.0);
        let q = RDifferential::zero(4);
        let w = crate::toda::base_solution(4, &metric, &grid).unwrap();
        let report = validate(&w, &q, &metric, 0.0).unwrap();
        assert!(report.residuals.iter().all(|e| e.sup_norm < 1e-12));
        // For q = 0 the ratios sit exactly at the lower bounds (case iii).
        let (lo, hi) = report.case_one.ratio_ranges[0];
        let bound = report.case_one.ratio_lower_bounds[0];
        assert!((lo - bound).abs() < 1e-12 && (hi - bound).abs() < 1e-12);
        assert!(report.curvature.pullback_max < 0.0);
        assert!(report.curvature.derived_min >= -4.0 - 1e-10);
        let comp = report.completeness.unwrap();
        for m in comp.margins {
            assert!(m > -1e-9, "completeness margin {m}");
        }
    }

    #[test]
    fn solved_monomial_satisfies_strict_bounds() {
        let q = RDifferential::monomial(3, 1);
        let cfg = SolverConfig {
            spacing: 0.04,
            ..SolverConfig::default()
        };
        let sol = disk_solve(&q, &cfg).unwrap();
        let report = validate(&sol.field, &q, &sol.metric, 0.05).unwrap();
        assert!(report.case_one.log_bound_excess < 1e-3);
        assert!(report.case_one.first_ratio_max < 1.0 + 1e-3);
        assert!(report.curvature.pullback_max < 0.0);
        assert!(report.curvature.derived_min >= -4.0 - 1e-2);
        assert!(report.curvature.simpson_min > -0.05);
        let comp = report.completeness.unwrap();
        for m in comp.margins {
            assert!(m > -1e-3, "completeness margin {m}");
        }
    }
}
