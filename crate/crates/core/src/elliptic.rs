//! Discrete linear elliptic Dirichlet solves (lap_g - d) u = f and the
//! shift constants that make the outer iteration monotone.
//!
//! The solver contract is the residual bound, not the method: here the
//! symmetrized system (-flat_lap/4 + d g0) u = -g0 f is solved by
//! Jacobi-preconditioned conjugate gradients, and convergence is declared
//! on the sup norm of the original defect (lap_g - d) u - f.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::field::ScalarField;
use crate::geometry::grid::DomainGrid;
use crate::toda::TodaField;

/// One linear Dirichlet problem: (lap_g - shift) u = source on the
/// interior, u = boundary on boundary nodes.
pub struct DirichletProblem<'a> {
    pub grid: &'a Arc<DomainGrid>,
    /// Conformal factor of the background metric on the same grid.
    pub g0: &'a ScalarField,
    /// Nonnegative zeroth-order shift.
    pub shift: f64,
    pub source: &'a ScalarField,
    /// Dirichlet values; only boundary-node entries are read.
    pub boundary: &'a ScalarField,
}

/// Same problem with a nodewise nonnegative shift field, used by the
/// outer iteration (the comparison principle holds verbatim for a
/// variable zeroth-order coefficient).
pub struct VariableShiftProblem<'a> {
    pub grid: &'a Arc<DomainGrid>,
    pub g0: &'a ScalarField,
    pub shift: &'a ScalarField,
    pub source: &'a ScalarField,
    pub boundary: &'a ScalarField,
}

/// Solve to `tol` in the sup norm of the defect; `max_iters` caps the CG
/// iteration count.
pub fn solve_dirichlet(p: &DirichletProblem, tol: f64, max_iters: usize) -> Result<ScalarField> {
    if p.shift < 0.0 || !p.shift.is_finite() {
        return Err(Error::Config(format!(
            "shift must be nonnegative, got {}",
            p.shift
        )));
    }
    let shift = ScalarField::fill(p.grid.clone(), p.shift);
    solve_dirichlet_variable(
        &VariableShiftProblem {
            grid: p.grid,
            g0: p.g0,
            shift: &shift,
            source: p.source,
            boundary: p.boundary,
        },
        tol,
        max_iters,
    )
}

pub fn solve_dirichlet_variable(
    p: &VariableShiftProblem,
    tol: f64,
    max_iters: usize,
) -> Result<ScalarField> {
    if !(tol > 0.0) {
        return Err(Error::Config("tolerance must be positive".into()));
    }
    let grid = p.grid;
    let interior = grid.interior_nodes();
    let m = interior.len();
    if m == 0 {
        return Err(Error::EmptyDomain);
    }
    let h2 = grid.spacing * grid.spacing;
    let quarter = 1.0 / (4.0 * h2);

    // Interior ordinal lookup: compact index -> position in `interior`.
    let mut ordinal = vec![u32::MAX; grid.node_count()];
    for (k, &c) in interior.iter().enumerate() {
        ordinal[c as usize] = k as u32;
    }

    // Assemble diag, rhs, and neighbour lists in interior ordering.
    let mut diag = Vec::with_capacity(m);
    let mut rhs = Vec::with_capacity(m);
    let mut nbs: Vec<[u32; 4]> = Vec::with_capacity(m);
    for (k, &c) in interior.iter().enumerate() {
        let c = c as usize;
        let g0c = p.g0.get(c);
        let shift = p.shift.get(c);
        if shift < 0.0 || !shift.is_finite() {
            return Err(Error::Config(format!(
                "shift must be nonnegative, got {shift} at node {c}"
            )));
        }
        diag.push(1.0 / h2 + shift * g0c);
        let mut b = -g0c * p.source.get(c);
        let st = grid.stencil(k);
        let mut local = [u32::MAX; 4];
        for (slot, &nb) in local.iter_mut().zip(&st) {
            let ord = ordinal[nb as usize];
            if ord == u32::MAX {
                b += quarter * p.boundary.get(nb as usize);
            } else {
                *slot = ord;
            }
        }
        nbs.push(local);
        rhs.push(b);
    }

    let matvec = |x: &[f64], out: &mut [f64]| {
        for k in 0..m {
            let mut acc = diag[k] * x[k];
            for &nb in &nbs[k] {
                if nb != u32::MAX {
                    acc -= quarter * x[nb as usize];
                }
            }
            out[k] = acc;
        }
    };

    // Defect of the original equation is r / g0 where r = rhs - A x.
    let defect_sup = |r: &[f64]| -> f64 {
        let mut worst = 0.0f64;
        for (k, &c) in interior.iter().enumerate() {
            worst = worst.max((r[k] / p.g0.get(c as usize)).abs());
        }
        worst
    };

    let mut x = vec![0.0; m];
    // Warm start from the boundary mean keeps early defects small.
    let bmean = if grid.boundary_count() > 0 {
        grid.boundary_nodes()
            .iter()
            .map(|&b| p.boundary.get(b as usize))
            .sum::<f64>()
            / grid.boundary_count() as f64
    } else {
        0.0
    };
    x.iter_mut().for_each(|v| *v = bmean);

    let mut r = vec![0.0; m];
    let mut ax = vec![0.0; m];
    matvec(&x, &mut ax);
    for k in 0..m {
        r[k] = rhs[k] - ax[k];
    }
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(&ri, &di)| ri / di).collect();
    let mut pdir = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(&a, &b)| a * b).sum();
    let mut best = defect_sup(&r);
    if best <= tol {
        return assemble(grid, p.boundary, interior, &x);
    }

    let cap = max_iters.max(1);
    let mut ap = vec![0.0; m];
    for iter in 0..cap {
        matvec(&pdir, &mut ap);
        let pap: f64 = pdir.iter().zip(&ap).map(|(&a, &b)| a * b).sum();
        if pap <= 0.0 || !pap.is_finite() {
            return Err(Error::LinearNoConvergence {
                best,
                iters: iter,
                target: tol,
            });
        }
        let alpha = rz / pap;
        for k in 0..m {
            x[k] += alpha * pdir[k];
            r[k] -= alpha * ap[k];
        }
        let sup = defect_sup(&r);
        best = best.min(sup);
        if sup <= tol {
            return assemble(grid, p.boundary, interior, &x);
        }
        for k in 0..m {
            z[k] = r[k] / diag[k];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(&a, &b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..m {
            pdir[k] = z[k] + beta * pdir[k];
        }
    }
    Err(Error::LinearNoConvergence {
        best,
        iters: cap,
        target: tol,
    })
}

fn assemble(
    grid: &Arc<DomainGrid>,
    boundary: &ScalarField,
    interior: &[u32],
    x: &[f64],
) -> Result<ScalarField> {
    let mut vals = boundary.values().to_vec();
    for (k, &c) in interior.iter().enumerate() {
        vals[c as usize] = x[k];
    }
    let out = ScalarField::from_values(grid.clone(), vals)?;
    if !out.all_finite() {
        return Err(Error::LinearNoConvergence {
            best: f64::INFINITY,
            iters: 0,
            target: 0.0,
        });
    }
    Ok(out)
}

/// Per-equation shift constants d_k = max(0, max over the box of
/// dF_k/dw_k). Each diagonal partial is a sum of exponentials, convex and
/// coordinatewise monotone, so the maximum over the pointwise box
/// [low(x), high(x)] is attained at explicit corners:
///
///   dF_1/dw_1 = 2 e^{2w_1} |q|_g^2 + e^{-w_1 + w_2}        (w_2 at high)
///   dF_k/dw_k = e^{-w_{k-1} + w_k} + e^{-w_k + w_{k+1}}    (w_{k-1} low, w_{k+1} high)
///   dF_n/dw_n = e^{-w_{n-1} + w_n} + (2n+2-r) e^{-(2n+2-r) w_n}
///
/// with w_k itself checked at both ends of its interval.
pub fn shift_constants(
    box_low: &TodaField,
    box_high: &TodaField,
    q_sq: &ScalarField,
) -> Result<Vec<f64>> {
    if box_low.r() != box_high.r() {
        return Err(Error::Config("box order mismatch".into()));
    }
    let n = box_low.n();
    let grid = box_low.grid().clone();
    box_low.component(0).check_same_grid(q_sq)?;
    let mut worst_violation = 0.0f64;
    for k in 0..n {
        for c in grid.all_nodes() {
            let gap = box_low.component(k).get(c) - box_high.component(k).get(c);
            worst_violation = worst_violation.max(gap);
        }
    }
    if worst_violation > 1e-9 {
        return Err(Error::BoxViolation(worst_violation));
    }
    let r = box_low.r() as f64;
    let closing = 2.0 * n as f64 + 2.0 - r;
    let mut out = Vec::with_capacity(n);
    for k in 1..=n {
        let mut dk = 0.0f64;
        for c in grid.all_nodes() {
            let lo = box_low.component(k - 1).get(c);
            let hi = box_high.component(k - 1).get(c);
            for wk in [lo, hi] {
                let first = if k == 1 {
                    2.0 * (2.0 * wk).exp() * q_sq.get(c)
                } else {
                    // e^{-w_{k-1} + w_k}, maximized at w_{k-1} low.
                    (wk - box_low.component(k - 2).get(c)).exp()
                };
                let second = if k == n {
                    closing * (-closing * wk).exp()
                } else {
                    // e^{-w_k + w_{k+1}}, maximized at w_{k+1} high.
                    (box_high.component(k).get(c) - wk).exp()
                };
                dk = dk.max(first + second);
            }
        }
        out.push(dk.max(0.0));
    }
    Ok(out)
}

/// Sampled check of the quasi-monotonicity assumption dF_k/dw_j <= 0 for
/// j != k, by central finite differences of the actual right-hand side at
/// random points of the box. Returns false if any sampled cross-partial is
/// positive beyond rounding.
pub fn offdiagonal_sign_check(
    q_sq: &ScalarField,
    box_low: &TodaField,
    box_high: &TodaField,
    curvature: &ScalarField,
    samples: usize,
    seed: u64,
) -> Result<bool> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = box_low.n();
    if n == 1 {
        return Ok(true); // no off-diagonal couplings
    }
    let r = box_low.r() as f64;
    let closing = 2.0 * n as f64 + 2.0 - r;
    let grid = box_low.grid().clone();
    let node_count = grid.node_count();
    let delta = 1e-5;
    let rhs_at = |w: &[f64], c: usize| -> Vec<f64> {
        let mut f = Vec::with_capacity(n);
        for k in 1..=n {
            let coeff = (r + 1.0 - 2.0 * k as f64) / 4.0;
            let incoming = if k == 1 {
                (2.0 * w[0]).exp() * q_sq.get(c)
            } else {
                (w[k - 1] - w[k - 2]).exp()
            };
            let outgoing = if k == n {
                (-closing * w[n - 1]).exp()
            } else {
                (w[k] - w[k - 1]).exp()
            };
            f.push(incoming - outgoing - coeff * curvature.get(c));
        }
        f
    };
    for _ in 0..samples {
        let c = rng.gen_range(0..node_count);
        let mut w: Vec<f64> = (0..n)
            .map(|k| {
                let lo = box_low.component(k).get(c);
                let hi = box_high.component(k).get(c);
                if hi > lo {
                    rng.gen_range(lo..=hi)
                } else {
                    lo
                }
            })
            .collect();
        for j in 0..n {
            let keep = w[j];
            w[j] = keep + delta;
            let up = rhs_at(&w, c);
            w[j] = keep - delta;
            let down = rhs_at(&w, c);
            w[j] = keep;
            for k in 0..n {
                if k == j {
                    continue;
                }
                let partial = (up[k] - down[k]) / (2.0 * delta);
                if partial > 1e-9 {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::grid::Region;
    use crate::geometry::metric::BackgroundMetric;
    use crate::geometry::ops::{flat_laplacian, gaussian_curvature, q_norm_sq};
    use crate::differential::RDifferential;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid(region: Region, h: f64) -> Arc<DomainGrid> {
        Arc::new(DomainGrid::new(region, h).unwrap())
    }

    fn euclid_g0(g: &Arc<DomainGrid>) -> ScalarField {
        ScalarField::fill(g.clone(), 1.0)
    }

    #[test]
    fn constant_boundary_no_source_gives_constant() {
        let g = grid(Region::disk(1.0), 0.05);
        let g0 = euclid_g0(&g);
        let f = ScalarField::fill(g.clone(), 0.0);
        let bv = ScalarField::fill(g.clone(), 2.5);
        let u = solve_dirichlet(
            &DirichletProblem {
                grid: &g,
                g0: &g0,
                shift: 0.0,
                source: &f,
                boundary: &bv,
            },
            1e-10,
            10_000,
        )
        .unwrap();
        for c in g.all_nodes() {
            assert!((u.get(c) - 2.5).abs() < 1e-8);
        }
    }

    #[test]
    fn harmonic_manufactured_solution() {
        // u* = x^2 - y^2 is discrete-harmonic for the five-point stencil.
        let g = grid(Region::disk(1.0), 0.05);
        let g0 = euclid_g0(&g);
        let exact = ScalarField::from_fn(g.clone(), |z| z.re * z.re - z.im * z.im);
        let f = ScalarField::fill(g.clone(), 0.0);
        let u = solve_dirichlet(
            &DirichletProblem {
                grid: &g,
                g0: &g0,
                shift: 0.0,
                source: &f,
                boundary: &exact,
            },
            1e-11,
            20_000,
        )
        .unwrap();
        let err = u.sub(&exact).unwrap().sup_norm();
        assert!(err < 1e-8, "harmonic recovery error {err}");
    }

    #[test]
    fn shifted_manufactured_solution_discrete_rhs() {
        // With f computed by the same stencil, recovery is exact to tol.
        let g = grid(Region::square(1.0), 0.05);
        let g0 = euclid_g0(&g);
        let exact = ScalarField::from_fn(g.clone(), |z| {
            (std::f64::consts::PI * z.re).sin() * (std::f64::consts::PI * z.im).sin()
        });
        let d = 1.0;
        let lap = flat_laplacian(&exact);
        let mut f = vec![0.0; g.node_count()];
        for &c in g.interior_nodes() {
            let c = c as usize;
            f[c] = lap.get(c) / 4.0 - d * exact.get(c);
        }
        let f = ScalarField::from_values(g.clone(), f).unwrap();
        let u = solve_dirichlet(
            &DirichletProblem {
                grid: &g,
                g0: &g0,
                shift: d,
                source: &f,
                boundary: &exact,
            },
            1e-11,
            20_000,
        )
        .unwrap();
        let err = u.sub(&exact).unwrap().sup_norm();
        assert!(err < 1e-8, "recovery error {err}");
    }

    #[test]
    fn mesh_refinement_order_at_least_1_9() {
        // Continuum manufactured solution u* = sin(pi x) sin(pi y) with
        // analytic source; the discretization error order is ~2.
        let err_at = |h: f64| -> f64 {
            let g = grid(Region::square(1.0), h);
            let g0 = euclid_g0(&g);
            let pi = std::f64::consts::PI;
            let exact = ScalarField::from_fn(g.clone(), move |z| (pi * z.re).sin() * (pi * z.im).sin());
            let d = 1.0;
            let f = ScalarField::from_fn(g.clone(), move |z| {
                (-2.0 * pi * pi / 4.0 - d) * (pi * z.re).sin() * (pi * z.im).sin()
            });
            let u = solve_dirichlet(
                &DirichletProblem {
                    grid: &g,
                    g0: &g0,
                    shift: d,
                    source: &f,
                    boundary: &exact,
                },
                1e-12,
                40_000,
            )
            .unwrap();
            u.sub(&exact).unwrap().sup_norm()
        };
        let e1 = err_at(0.1);
        let e2 = err_at(0.05);
        let order = (e1 / e2).log2();
        assert!(order >= 1.9, "observed order {order} ({e1} -> {e2})");
    }

    #[test]
    fn poincare_weights_respected() {
        // lap_g u = f with g the Poincare metric: check the defect directly.
        let g = grid(Region::disk(1.0), 0.05);
        let metric = BackgroundMetric::poincare_disk(1.0);
        let g0 = metric.g0_field(&g).unwrap();
        let f = ScalarField::from_fn(g.clone(), |z| z.re);
        let bv = ScalarField::fill(g.clone(), 0.0);
        let u = solve_dirichlet(
            &DirichletProblem {
                grid: &g,
                g0: &g0,
                shift: 0.5,
                source: &f,
                boundary: &bv,
            },
            1e-9,
            40_000,
        )
        .unwrap();
        let lap = flat_laplacian(&u);
        let mut worst = 0.0f64;
        for &c in g.interior_nodes() {
            let c = c as usize;
            let defect = lap.get(c) / (4.0 * g0.get(c)) - 0.5 * u.get(c) - f.get(c);
            worst = worst.max(defect.abs());
        }
        assert!(worst <= 1e-9 * 1.001, "defect {worst}");
    }

    #[test]
    fn solver_is_linear_in_data() {
        let g = grid(Region::disk(1.0), 0.1);
        let g0 = euclid_g0(&g);
        let f1 = ScalarField::from_fn(g.clone(), |z| z.re);
        let f2 = ScalarField::from_fn(g.clone(), |z| z.im * z.re);
        let b1 = ScalarField::from_fn(g.clone(), |z| z.norm_sqr());
        let b2 = ScalarField::fill(g.clone(), 1.0);
        let solve = |f: &ScalarField, b: &ScalarField| {
            solve_dirichlet(
                &DirichletProblem {
                    grid: &g,
                    g0: &g0,
                    shift: 0.3,
                    source: f,
                    boundary: b,
                },
                1e-12,
                20_000,
            )
            .unwrap()
        };
        let u1 = solve(&f1, &b1);
        let u2 = solve(&f2, &b2);
        let combo = solve(
            &f1.scaled(2.0).add(&f2.scaled(-1.5)).unwrap(),
            &b1.scaled(2.0).add(&b2.scaled(-1.5)).unwrap(),
        );
        let lin = u1.scaled(2.0).add(&u2.scaled(-1.5)).unwrap();
        let err = combo.sub(&lin).unwrap().sup_norm();
        assert!(err < 1e-7, "linearity defect {err}");
    }

    #[test]
    fn discrete_comparison_principle() {
        // If (lap_g - d) u >= (lap_g - d) v on the interior and u <= v on
        // the boundary, then u <= v everywhere.
        let g = grid(Region::disk(1.0), 0.1);
        let g0 = euclid_g0(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..20 {
            let amp: f64 = rng.gen_range(0.1..2.0);
            let f_u = ScalarField::from_fn(g.clone(), |z| amp * (1.0 + z.re.sin()));
            // f_v <= f_u pointwise, i.e. (lap - d) v = f_v <= f_u.
            let gap: f64 = rng.gen_range(0.0..1.0);
            let f_v = f_u.shifted(-gap);
            let b_u = ScalarField::fill(g.clone(), rng.gen_range(-1.0..0.0));
            let b_v = b_u.shifted(rng.gen_range(0.0..1.0));
            let d = rng.gen_range(0.0..2.0);
            let solve = |f: &ScalarField, b: &ScalarField| {
                solve_dirichlet(
                    &DirichletProblem {
                        grid: &g,
                        g0: &g0,
                        shift: d,
                        source: f,
                        boundary: b,
                    },
                    1e-11,
                    20_000,
                )
                .unwrap()
            };
            let u = solve(&f_u, &b_u);
            let v = solve(&f_v, &b_v);
            for c in g.all_nodes() {
                assert!(
                    u.get(c) <= v.get(c) + 1e-8,
                    "comparison violated: {} > {}",
                    u.get(c),
                    v.get(c)
                );
            }
        }
    }

    #[test]
    fn shift_constants_match_brute_force() {
        let g = grid(Region::disk(1.0), 0.2);
        let metric = BackgroundMetric::poincare_disk(1.0);
        let q = RDifferential::monomial(5, 1);
        let q_sq = q_norm_sq(&q, &metric, &g).unwrap();
        let lo = TodaField::constants(5, g.clone(), &[-1.0, -0.8]).unwrap();
        let hi = TodaField::constants(5, g.clone(), &[0.4, 0.9]).unwrap();
        let d = shift_constants(&lo, &hi, &q_sq).unwrap();
        // Brute force over a dense box sample at every node.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 2usize;
        let r = 5.0;
        let closing = 2.0 * n as f64 + 2.0 - r;
        let mut brute = vec![0.0f64; n];
        for _ in 0..10_000 {
            let c = rng.gen_range(0..g.node_count());
            let w: Vec<f64> = (0..n)
                .map(|k| rng.gen_range(lo.component(k).get(c)..=hi.component(k).get(c)))
                .collect();
            brute[0] = brute[0].max(2.0 * (2.0 * w[0]).exp() * q_sq.get(c) + (w[1] - w[0]).exp());
            brute[1] =
                brute[1].max((w[1] - w[0]).exp() + closing * (-closing * w[1]).exp());
        }
        for k in 0..n {
            assert!(
                d[k] >= brute[k] - 1e-10,
                "corner rule {} below brute force {}",
                d[k],
                brute[k]
            );
            assert!(
                d[k] <= brute[k] * 1.2 + 1e-6,
                "corner rule {} far above brute force {}",
                d[k],
                brute[k]
            );
        }
    }

    #[test]
    fn shift_constant_degenerate_box_r2() {
        // q = 0, r = 2, box = {log 2}: d_1 = 2 e^{-2 log 2} = 1/2.
        let g = grid(Region::disk(1.0), 0.2);
        let q_sq = ScalarField::fill(g.clone(), 0.0);
        let w = TodaField::constants(2, g.clone(), &[2f64.ln()]).unwrap();
        let d = shift_constants(&w, &w, &q_sq).unwrap();
        assert!((d[0] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn shift_constants_monotone_in_box() {
        let g = grid(Region::disk(1.0), 0.2);
        let metric = BackgroundMetric::poincare_disk(1.0);
        let q = RDifferential::monomial(4, 1);
        let q_sq = q_norm_sq(&q, &metric, &g).unwrap();
        let lo = TodaField::constants(4, g.clone(), &[-0.5, -0.5]).unwrap();
        let hi = TodaField::constants(4, g.clone(), &[0.5, 0.5]).unwrap();
        let hi_wide = TodaField::constants(4, g.clone(), &[1.0, 1.0]).unwrap();
        let d_narrow = shift_constants(&lo, &hi, &q_sq).unwrap();
        let d_wide = shift_constants(&lo, &hi_wide, &q_sq).unwrap();
        for k in 0..2 {
            assert!(d_wide[k] >= d_narrow[k]);
        }
        // Violated box errors out.
        assert!(shift_constants(&hi, &lo, &q_sq).is_err());
    }

    #[test]
    fn offdiagonal_signs_nonpositive() {
        let g = grid(Region::disk(1.0), 0.2);
        let metric = BackgroundMetric::poincare_disk(1.0);
        for r in [4u32, 5, 7] {
            let n = (r / 2) as usize;
            let q = RDifferential::monomial(r, 1);
            let q_sq = q_norm_sq(&q, &metric, &g).unwrap();
            let curvature = gaussian_curvature(&metric, &g).unwrap();
            let lo = TodaField::constants(r, g.clone(), &vec![-1.0; n]).unwrap();
            let hi = TodaField::constants(r, g.clone(), &vec![1.0; n]).unwrap();
            let ok = offdiagonal_sign_check(&q_sq, &lo, &hi, &curvature, 1000, 7).unwrap();
            assert!(ok, "cross-partials must be nonpositive for r = {r}");
        }
        // n = 1 is vacuous.
        let q_sq = ScalarField::fill(g.clone(), 0.0);
        let curvature = ScalarField::fill(g.clone(), -1.0);
        let w = TodaField::constants(2, g.clone(), &[0.0]).unwrap();
        assert!(offdiagonal_sign_check(&q_sq, &w, &w, &curvature, 10, 1).unwrap());
    }
}
