//! Right-hand sides, real reduction, residuals, closed-form reference
//! solutions and the model comparison constants.
//!
//! The real reduction keeps the first n = floor(r/2) unknowns; the full
//! tuple is recovered by w_{r+1-i} = -w_i (with the middle component zero
//! for odd r), so the extended tuple always sums to zero.

use std::sync::Arc;

use serde::Serialize;

use crate::differential::RDifferential;
use crate::error::{Error, Result};
use crate::geometry::field::ScalarField;
use crate::geometry::grid::DomainGrid;
use crate::geometry::metric::BackgroundMetric;
use crate::geometry::ops::{flat_laplacian, gaussian_curvature, q_norm_sq};

/// Exponent guard: e^{+-w} overflows f64 near 709.
pub const OVERFLOW_LIMIT: f64 = 700.0;

/// Cap on log|q|_g in the logarithmic reference solution.
pub const LOG_Q_CLAMP: f64 = 50.0;

/// The n = floor(r/2) real unknowns of the reduced system as grid fields.
#[derive(Debug, Clone)]
pub struct TodaField {
    r: u32,
    components: Vec<ScalarField>,
    /// Nodes excluded from residual norms (near zeros of q for the
    /// logarithmic solution).
    pub flagged: Vec<usize>,
}

impl TodaField {
    pub fn new(r: u32, components: Vec<ScalarField>) -> Result<TodaField> {
        let n = (r / 2) as usize;
        if r < 2 || components.len() != n {
            return Err(Error::Config(format!(
                "need n = floor(r/2) = {n} components for r = {r}, got {}",
                components.len()
            )));
        }
        for w in &components[1..] {
            components[0].check_same_grid(w)?;
        }
        Ok(TodaField {
            r,
            components,
            flagged: Vec::new(),
        })
    }

    pub fn constants(r: u32, grid: Arc<DomainGrid>, values: &[f64]) -> Result<TodaField> {
        let components = values
            .iter()
            .map(|&v| ScalarField::fill(grid.clone(), v))
            .collect();
        TodaField::new(r, components)
    }

    #[inline]
    pub fn r(&self) -> u32 {
        self.r
    }

    #[inline]
    pub fn n(&self) -> usize {
        (self.r / 2) as usize
    }

    #[inline]
    pub fn grid(&self) -> &Arc<DomainGrid> {
        self.components[0].grid()
    }

    #[inline]
    pub fn component(&self, k: usize) -> &ScalarField {
        &self.components[k]
    }

    #[inline]
    pub fn component_mut(&mut self, k: usize) -> &mut ScalarField {
        &mut self.components[k]
    }

    #[inline]
    pub fn components(&self) -> &[ScalarField] {
        &self.components
    }

    /// Reality extension to the full r-tuple: (w_1..w_n, [0], -w_n..-w_1).
    pub fn extended(&self) -> Vec<ScalarField> {
        let n = self.n();
        let r = self.r as usize;
        let mut full = Vec::with_capacity(r);
        for k in 0..n {
            full.push(self.components[k].clone());
        }
        if r % 2 == 1 {
            full.push(ScalarField::fill(self.grid().clone(), 0.0));
        }
        for k in (0..n).rev() {
            full.push(self.components[k].scaled(-1.0));
        }
        full
    }

    pub fn all_finite(&self) -> bool {
        self.components.iter().all(ScalarField::all_finite)
    }

    /// Componentwise max of |w_k| over masked nodes.
    pub fn sup_norm(&self) -> f64 {
        self.components
            .iter()
            .fold(0.0, |m, w| m.max(w.sup_norm()))
    }

    /// Largest componentwise difference max_k sup |self_k - other_k|.
    pub fn sup_distance(&self, other: &TodaField) -> Result<f64> {
        if self.r != other.r {
            return Err(Error::Config("order mismatch".into()));
        }
        let mut worst = 0.0f64;
        for (a, b) in self.components.iter().zip(&other.components) {
            worst = worst.max(a.sub(b)?.sup_norm());
        }
        Ok(worst)
    }

    /// Componentwise `self <= other + tol` over all masked nodes.
    pub fn le_within(&self, other: &TodaField, tol: f64) -> Result<bool> {
        if self.r != other.r {
            return Err(Error::Config("order mismatch".into()));
        }
        for (a, b) in self.components.iter().zip(&other.components) {
            a.check_same_grid(b)?;
            for c in 0..a.len() {
                if a.get(c) > b.get(c) + tol {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    pub fn shifted(&self, c: f64) -> TodaField {
        TodaField {
            r: self.r,
            components: self.components.iter().map(|w| w.shifted(c)).collect(),
            flagged: self.flagged.clone(),
        }
    }

    /// Convert between conformal frames: the same solution re-expressed for
    /// the metric with factor `g0_new` instead of `g0_old` gains
    /// (r+1-2l)/2 log(g0_new/g0_old) in component l.
    pub fn reframed(&self, g0_old: &ScalarField, g0_new: &ScalarField) -> Result<TodaField> {
        let log_ratio = g0_new.zip_map(g0_old, |a, b| (a / b).ln())?;
        let r = self.r;
        let components = self
            .components
            .iter()
            .enumerate()
            .map(|(idx, w)| {
                let l = idx as f64 + 1.0;
                let weight = (r as f64 + 1.0 - 2.0 * l) / 2.0;
                w.add(&log_ratio.scaled(weight))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TodaField {
            r,
            components,
            flagged: self.flagged.clone(),
        })
    }
}

/// Checks the exponent guard over all components.
fn check_overflow(w: &TodaField) -> Result<()> {
    if w.sup_norm() > OVERFLOW_LIMIT {
        return Err(Error::DivergedField {
            limit: OVERFLOW_LIMIT,
        });
    }
    Ok(())
}

/// Pointwise data needed by the right-hand sides.
pub struct RhsContext {
    pub q_sq: ScalarField,
    pub curvature: ScalarField,
}

impl RhsContext {
    pub fn new(
        q: &RDifferential,
        metric: &BackgroundMetric,
        grid: &Arc<DomainGrid>,
    ) -> Result<RhsContext> {
        Ok(RhsContext {
            q_sq: q_norm_sq(q, metric, grid)?,
            curvature: gaussian_curvature(metric, grid)?,
        })
    }
}

/// Right-hand sides F_1..F_n of the reduced system at the given field.
///
/// F_1 = e^{2 w_1} |q|_g^2 - e^{-w_1 + w_2} - (r-1)/4 k_g, the middle
/// components couple neighbours, and the last closes with
/// e^{-(2n+2-r) w_n}. For n = 1 the closing term replaces the w_2 term.
pub fn rhs_real(w: &TodaField, ctx: &RhsContext) -> Result<Vec<ScalarField>> {
    check_overflow(w)?;
    let r = w.r() as f64;
    let n = w.n();
    let grid = w.grid().clone();
    let closing = 2.0 * n as f64 + 2.0 - r; // 2n + 2 - r, in {1, 2}
    let mut out = Vec::with_capacity(n);
    for k in 1..=n {
        let coeff = (r + 1.0 - 2.0 * k as f64) / 4.0;
        let mut vals = Vec::with_capacity(grid.node_count());
        for c in grid.all_nodes() {
            let wk = w.component(k - 1).get(c);
            let incoming = if k == 1 {
                (2.0 * wk).exp() * ctx.q_sq.get(c)
            } else {
                (wk - w.component(k - 2).get(c)).exp()
            };
            let outgoing = if k == n {
                (-closing * wk).exp()
            } else {
                (w.component(k).get(c) - wk).exp()
            };
            vals.push(incoming - outgoing - coeff * ctx.curvature.get(c));
        }
        out.push(ScalarField::from_values(grid.clone(), vals)?);
    }
    Ok(out)
}

/// Local magnitude of the right-hand side terms, |incoming| + |outgoing| +
/// |curvature term|, used to scale discretization allowances (the net F
/// vanishes at exact solutions, its terms do not).
pub fn rhs_scale(w: &TodaField, ctx: &RhsContext) -> Result<Vec<ScalarField>> {
    check_overflow(w)?;
    let r = w.r() as f64;
    let n = w.n();
    let grid = w.grid().clone();
    let closing = 2.0 * n as f64 + 2.0 - r;
    let mut out = Vec::with_capacity(n);
    for k in 1..=n {
        let coeff = (r + 1.0 - 2.0 * k as f64) / 4.0;
        let mut vals = Vec::with_capacity(grid.node_count());
        for c in grid.all_nodes() {
            let wk = w.component(k - 1).get(c);
            let incoming = if k == 1 {
                (2.0 * wk).exp() * ctx.q_sq.get(c)
            } else {
                (wk - w.component(k - 2).get(c)).exp()
            };
            let outgoing = if k == n {
                (-closing * wk).exp()
            } else {
                (w.component(k).get(c) - wk).exp()
            };
            vals.push(incoming.abs() + outgoing.abs() + (coeff * ctx.curvature.get(c)).abs());
        }
        out.push(ScalarField::from_values(grid.clone(), vals)?);
    }
    Ok(out)
}

/// Right-hand sides of the full r-component system at an extended tuple.
pub fn rhs_full(full: &[ScalarField], r: u32, ctx: &RhsContext) -> Result<Vec<ScalarField>> {
    let r_us = r as usize;
    if full.len() != r_us {
        return Err(Error::Config(format!(
            "need {r_us} components, got {}",
            full.len()
        )));
    }
    let grid = full[0].grid().clone();
    for w in &full[1..] {
        full[0].check_same_grid(w)?;
    }
    for w in full {
        if w.sup_norm() > OVERFLOW_LIMIT {
            return Err(Error::DivergedField {
                limit: OVERFLOW_LIMIT,
            });
        }
    }
    let rf = r as f64;
    let mut out = Vec::with_capacity(r_us);
    for j in 1..=r_us {
        let coeff = (rf + 1.0 - 2.0 * j as f64) / 4.0;
        let mut vals = Vec::with_capacity(grid.node_count());
        for c in grid.all_nodes() {
            let wj = full[j - 1].get(c);
            let incoming = if j == 1 {
                ctx.q_sq.get(c) * (wj - full[r_us - 1].get(c)).exp()
            } else {
                (wj - full[j - 2].get(c)).exp()
            };
            let outgoing = if j == r_us {
                ctx.q_sq.get(c) * (full[0].get(c) - wj).exp()
            } else {
                (full[j].get(c) - wj).exp()
            };
            vals.push(incoming - outgoing - coeff * ctx.curvature.get(c));
        }
        out.push(ScalarField::from_values(grid.clone(), vals)?);
    }
    Ok(out)
}

/// Per-equation residual norms of the discrete defect lap_g w_k - F_k over
/// interior, non-flagged nodes.
#[derive(Debug, Clone, Serialize)]
pub struct EquationResidual {
    pub equation_index: usize,
    pub sup_norm: f64,
    pub l2_norm: f64,
    pub flagged_nodes: usize,
}

pub fn residual(
    w: &TodaField,
    q: &RDifferential,
    metric: &BackgroundMetric,
) -> Result<Vec<EquationResidual>> {
    let grid = w.grid().clone();
    let ctx = RhsContext::new(q, metric, &grid)?;
    residual_with_ctx(w, &ctx, metric)
}

pub fn residual_with_ctx(
    w: &TodaField,
    ctx: &RhsContext,
    metric: &BackgroundMetric,
) -> Result<Vec<EquationResidual>> {
    let grid = w.grid().clone();
    let g0 = metric.g0_field(&grid)?;
    let rhs = rhs_real(w, ctx)?;
    let flagged: std::collections::HashSet<usize> = w.flagged.iter().copied().collect();
    let h2 = grid.spacing * grid.spacing;
    let mut out = Vec::with_capacity(w.n());
    for (k, f) in rhs.iter().enumerate() {
        let lap = flat_laplacian(w.component(k));
        let mut sup = 0.0f64;
        let mut l2 = 0.0f64;
        for &c in grid.interior_nodes() {
            let c = c as usize;
            if flagged.contains(&c) {
                continue;
            }
            let defect = lap.get(c) / (4.0 * g0.get(c)) - f.get(c);
            sup = sup.max(defect.abs());
            l2 += defect * defect * h2;
        }
        out.push(EquationResidual {
            equation_index: k + 1,
            sup_norm: sup,
            l2_norm: l2.sqrt(),
            flagged_nodes: flagged.len(),
        });
    }
    Ok(out)
}

/// Worst per-equation sup norm.
pub fn residual_sup(w: &TodaField, q: &RDifferential, metric: &BackgroundMetric) -> Result<f64> {
    Ok(residual(w, q, metric)?
        .iter()
        .fold(0.0, |m, e| m.max(e.sup_norm)))
}

/// The constant solution for q = 0 on a curvature -1 metric:
/// w_l = log((l-1)!/(r-l)! 2^{r+1-2l}).
pub fn base_values(r: u32) -> Vec<f64> {
    let n = (r / 2) as usize;
    (1..=n)
        .map(|l| {
            let num = factorial(l - 1);
            let den = factorial((r as usize) - l);
            (num / den).ln() + (r as f64 + 1.0 - 2.0 * l as f64) * 2f64.ln()
        })
        .collect()
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

pub fn base_solution(
    r: u32,
    metric: &BackgroundMetric,
    grid: &Arc<DomainGrid>,
) -> Result<TodaField> {
    if !metric.is_hyperbolic() {
        return Err(Error::UnsupportedMetric(format!(
            "base solution needs a curvature -1 metric, got {}",
            metric.kind_name()
        )));
    }
    TodaField::constants(r, grid.clone(), &base_values(r))
}

/// The logarithmic solution w_l = -((r+1-2l)/r) log|q|_g, exact away from
/// zeros of q. Values are clamped at |log|q|_g| <= 50 and nodes within two
/// spacings of a zero (or where the clamp was hit) are flagged.
pub fn q_solution(
    q: &RDifferential,
    metric: &BackgroundMetric,
    grid: &Arc<DomainGrid>,
) -> Result<TodaField> {
    if q.is_zero() {
        return Err(Error::DegenerateDifferential);
    }
    let r = q.order();
    let n = (r / 2) as usize;
    let q_sq = q_norm_sq(q, metric, grid)?;
    let mut flagged: Vec<usize> = Vec::new();
    let mut log_q = Vec::with_capacity(grid.node_count());
    let zeros = q.all_roots()?;
    let reach = 2.0 * grid.spacing;
    for c in grid.all_nodes() {
        let z = grid.z_of(c);
        let near_zero = zeros.iter().any(|&zr| (z - zr).norm() < reach);
        let half_log = 0.5 * q_sq.get(c).ln();
        let clamped = half_log.clamp(-LOG_Q_CLAMP, LOG_Q_CLAMP);
        if near_zero || clamped != half_log {
            flagged.push(c);
        }
        log_q.push(clamped);
    }
    let log_q = ScalarField::from_values(grid.clone(), log_q)?;
    let mut components = Vec::with_capacity(n);
    for l in 1..=n {
        let weight = -(r as f64 + 1.0 - 2.0 * l as f64) / r as f64;
        components.push(log_q.scaled(weight));
    }
    let mut field = TodaField::new(r, components)?;
    field.flagged = flagged;
    Ok(field)
}

/// Positive constants of the model comparison system:
/// 0 = (1+a) d_1 - (a+2) + 1/d_2,
/// 0 = -d_{k-1} d_k + 3 d_k - 3 + 1/d_{k+1}   (k = 2..m-1),
/// 0 = -d_{m-1} d_m + (2+b) d_m - (1+c).
#[derive(Debug, Clone, Serialize)]
pub struct ModelConstants {
    pub m: usize,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: Vec<f64>,
}

impl ModelConstants {
    /// Largest absolute defect of the defining relations.
    pub fn relation_defect(&self) -> f64 {
        let (a, b, c, d, m) = (self.a, self.b, self.c, &self.d, self.m);
        if m == 1 {
            // The first and last equations merge: (a+b) d_1 = a + c.
            return ((a + b) * d[0] - (a + c)).abs();
        }
        let mut worst = ((1.0 + a) * d[0] - (a + 2.0) + 1.0 / d[1]).abs();
        for k in 2..m {
            worst = worst.max((-d[k - 2] * d[k - 1] + 3.0 * d[k - 1] - 3.0 + 1.0 / d[k]).abs());
        }
        worst = worst.max((-d[m - 2] * d[m - 1] + (2.0 + b) * d[m - 1] - (1.0 + c)).abs());
        worst
    }
}

/// Solve the model constant system: seed d_m = (c(am+1-a)+a)/(b(am+1-a)+a)
/// and run the backward recurrence d_t - 1 = ((at+1-a)/a)(2 - 1/d_{t+1} - d_t).
pub fn d_constants(m: usize, a: f64, b: f64, c: f64) -> Result<ModelConstants> {
    if m < 1 || !(a > 0.0) || !(b > 0.0) || !(c > 0.0) {
        return Err(Error::Config(format!(
            "need m >= 1 and positive a, b, c; got m={m}, a={a}, b={b}, c={c}"
        )));
    }
    let am = a * m as f64 + 1.0 - a;
    let mut d = vec![0.0; m];
    d[m - 1] = (c * am + a) / (b * am + a);
    if !(d[m - 1] > 0.0) {
        return Err(Error::InfeasibleConstants {
            index: m,
            value: d[m - 1],
        });
    }
    for t in (1..m).rev() {
        let at = a * t as f64 + 1.0 - a;
        // d_t (1 + at/a) = 1 + (at/a)(2 - 1/d_{t+1})
        let w = at / a;
        let dt = (1.0 + w * (2.0 - 1.0 / d[t])) / (1.0 + w);
        if !(dt > 0.0) {
            return Err(Error::InfeasibleConstants {
                index: t,
                value: dt,
            });
        }
        d[t - 1] = dt;
    }
    Ok(ModelConstants { m, a, b, c, d })
}

/// Closed form for the (b = 1, c = 2) family:
/// d_k = (m-k+2)(ma+ka+2-a) / ((m-k+1)(ma+ka+2)).
pub fn d_constants_closed_form(m: usize, a: f64) -> Vec<f64> {
    (1..=m)
        .map(|k| {
            let mk = (m - k) as f64;
            let ka = a * k as f64;
            let ma = a * m as f64;
            (mk + 2.0) * (ma + ka + 2.0 - a) / ((mk + 1.0) * (ma + ka + 2.0))
        })
        .collect()
}

/// The strict lower bounds (k-1)(r-k+1)/(k(r-k)) of the consecutive-metric
/// ratios, for k = 2..n. Empty for r < 4.
pub fn ratio_bound_constants(r: u32) -> Vec<f64> {
    let n = (r / 2) as usize;
    if n < 2 {
        return Vec::new();
    }
    (2..=n)
        .map(|k| {
            let (k, r) = (k as f64, r as f64);
            (k - 1.0) * (r - k + 1.0) / (k * (r - k))
        })
        .collect()
}
