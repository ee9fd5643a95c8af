//! Batch driver: run a configured scenario, emit grids, manifests and
//! validation reports.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use crate::config::{MetricKind, RunConfig, Scenario};
use crate::error::{Error, Result};
use crate::estimates::{validate, ValidationReport};
use crate::geometry::grid::{DomainGrid, Region};
use crate::geometry::metric::BackgroundMetric;
use crate::geometry::ops::{gaussian_curvature, q_norm_sq};
use crate::io::{
    write_json, write_profile_csv, write_scalar_csv, write_solution_csv, GridHeader,
};
use crate::iteration::{
    disk_exhaustion_solve, disk_solve, finite_zeros_solve, plane_glue_solve, ExhaustionLevel,
    IterationTrace,
};
use crate::radial::radial_disk_solve;
use crate::toda::TodaField;

/// Exit statuses of a run.
pub const EXIT_OK: i32 = 0;
pub const EXIT_SOLVER_FAILURE: i32 = 1;
pub const EXIT_REJECTED: i32 = 2;

#[derive(Debug, Clone, Serialize)]
pub struct RecordedConstants {
    pub subsolution_e: Option<f64>,
    pub gluing_constant: Option<f64>,
    pub envelope_constant: Option<f64>,
    pub shift_constants: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub scenario: String,
    pub r: u32,
    pub n: usize,
    pub seed: u64,
    pub grid: Option<GridHeader>,
    pub metric: String,
    pub config: BTreeMap<String, String>,
    pub trace: Option<IterationTrace>,
    pub exhaustion_levels: Option<Vec<ExhaustionLevel>>,
    pub constants: RecordedConstants,
    pub hard_invariants_passed: bool,
    pub invariant_failures: Vec<String>,
    pub files: Vec<String>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub message: String,
}

/// Gate the exit status on the residual and, for complete-solution
/// scenarios, the strict closed-form bounds.
fn hard_invariants(
    report: &ValidationReport,
    residual_tol: f64,
    strict_bounds: bool,
) -> (bool, Vec<String>) {
    let mut failures = Vec::new();
    for eq in &report.residuals {
        if eq.sup_norm > residual_tol * 1.01 {
            failures.push(format!(
                "equation {} residual {:.3e} above {residual_tol:.3e}",
                eq.equation_index, eq.sup_norm
            ));
        }
    }
    if strict_bounds {
        let c1 = &report.case_one;
        if c1.log_bound_excess > 1e-3 {
            failures.push(format!(
                "logarithmic bound violated by {:.3e}",
                c1.log_bound_excess
            ));
        }
        if c1.first_ratio_max > 1.0 + 1e-3 {
            failures.push(format!(
                "first ratio reaches {:.6} > 1",
                c1.first_ratio_max
            ));
        }
        for (k, ((lo, hi), bound)) in c1
            .ratio_ranges
            .iter()
            .zip(&c1.ratio_lower_bounds)
            .enumerate()
        {
            if *lo < bound - 1e-3 {
                failures.push(format!(
                    "ratio {} dips to {lo:.6} below {bound:.6}",
                    k + 2
                ));
            }
            if *hi > 1.0 + 1e-3 {
                failures.push(format!("ratio {} reaches {hi:.6} > 1", k + 2));
            }
        }
        if report.curvature.derived_min < -4.0 - 1e-2 {
            failures.push(format!(
                "derived metric curvature {:.6} below -4",
                report.curvature.derived_min
            ));
        }
        if let Some(comp) = &report.completeness {
            for (l, m) in comp.margins.iter().enumerate() {
                if *m < -1e-3 {
                    failures.push(format!(
                        "completeness bound {} violated by {:.3e}",
                        l + 1,
                        -m
                    ));
                }
            }
        }
    }
    (failures.is_empty(), failures)
}

fn emit_solution(
    out_dir: &Path,
    name: &str,
    w: &TodaField,
    files: &mut Vec<String>,
) -> Result<()> {
    let file = format!("{name}.csv");
    write_solution_csv(&out_dir.join(&file), w)?;
    files.push(file);
    Ok(())
}

fn emit_plot_fields(
    out_dir: &Path,
    q: &crate::differential::RDifferential,
    metric: &BackgroundMetric,
    grid: &Arc<DomainGrid>,
    files: &mut Vec<String>,
) -> Result<()> {
    let qs = q_norm_sq(q, metric, grid)?;
    write_scalar_csv(&out_dir.join("q_norm_sq.csv"), &qs)?;
    files.push("q_norm_sq.csv".into());
    let k = gaussian_curvature(metric, grid)?;
    write_scalar_csv(&out_dir.join("curvature.csv"), &k)?;
    files.push("curvature.csv".into());
    Ok(())
}

/// Run one scenario. `validate_path` supplies the solution CSV for
/// validate_only runs.
pub fn run(
    config: &RunConfig,
    out_dir: &Path,
    validate_path: Option<&Path>,
) -> Result<RunOutcome> {
    std::fs::create_dir_all(out_dir)?;
    if config.threads > 0 {
        // One global pool per process; a failure here means it was
        // already set, which is fine for repeated library calls.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build_global();
    }
    let r = config.q.order();
    let mut manifest = Manifest {
        scenario: config.scenario.name().to_string(),
        r,
        n: (r / 2) as usize,
        seed: config.seed,
        grid: None,
        metric: String::new(),
        config: config.echo.clone(),
        trace: None,
        exhaustion_levels: None,
        constants: RecordedConstants {
            subsolution_e: None,
            gluing_constant: None,
            envelope_constant: None,
            shift_constants: Vec::new(),
        },
        hard_invariants_passed: false,
        invariant_failures: Vec::new(),
        files: Vec::new(),
    };

    // Rejection rules come before any solve.
    match config.scenario {
        Scenario::Plane if config.q.is_zero() => {
            let msg = "rejected: on a parabolic background a vanishing differential \
                       admits no solution (the solution set is empty)";
            manifest.invariant_failures.push(msg.to_string());
            write_json(&out_dir.join("manifest.json"), &manifest)?;
            return Ok(RunOutcome {
                exit_code: EXIT_REJECTED,
                message: msg.to_string(),
            });
        }
        Scenario::FiniteZeros if config.q.is_zero() => {
            let msg = "rejected: the finite-zeros construction needs a nonzero differential";
            manifest.invariant_failures.push(msg.to_string());
            write_json(&out_dir.join("manifest.json"), &manifest)?;
            return Ok(RunOutcome {
                exit_code: EXIT_REJECTED,
                message: msg.to_string(),
            });
        }
        _ => {}
    }

    let solve_result: Result<RunOutcome> = match config.scenario {
        Scenario::Disk => {
            if config.metric != MetricKind::PoincareDisk {
                return Err(Error::Config(
                    "the disk scenario runs in the hyperbolic frame; set metric = poincare_disk"
                        .into(),
                ));
            }
            manifest.metric = "poincare_disk(1)".into();
            if config.use_exhaustion {
                let ex = disk_exhaustion_solve(&config.q, &config.solver)?;
                manifest.grid = Some(GridHeader::of(ex.field.grid()));
                manifest.exhaustion_levels = Some(ex.levels.clone());
                manifest.constants.shift_constants =
                    ex.final_trace.shift_constants.clone();
                let report = validate(
                    &ex.field,
                    &config.q,
                    &BackgroundMetric::poincare_disk(1.0),
                    2.0 * config.solver.spacing,
                )?;
                manifest.trace = Some(ex.final_trace.clone());
                emit_solution(out_dir, "solution", &ex.field, &mut manifest.files)?;
                if config.emit_plot_data {
                    emit_plot_fields(
                        out_dir,
                        &config.q,
                        &BackgroundMetric::poincare_disk(1.0),
                        ex.field.grid(),
                        &mut manifest.files,
                    )?;
                }
                write_json(&out_dir.join("validation.json"), &report)?;
                manifest.files.push("validation.json".into());
                // The truncated exhaustion output is below the disk
                // solution; only residual-type invariants gate it.
                let (ok, failures) =
                    hard_invariants(&report, config.solver.residual_tol, false);
                manifest.hard_invariants_passed = ok;
                manifest.invariant_failures = failures;
                Ok(RunOutcome {
                    exit_code: if ok { EXIT_OK } else { EXIT_SOLVER_FAILURE },
                    message: format!(
                        "exhaustion over {} levels converged",
                        ex.levels.len()
                    ),
                })
            } else {
                let sol = disk_solve(&config.q, &config.solver)?;
                manifest.grid = Some(GridHeader::of(sol.field.grid()));
                manifest.constants.subsolution_e = Some(sol.subsolution_e);
                manifest.constants.shift_constants = sol.trace.shift_constants.clone();
                let report = validate(
                    &sol.field,
                    &config.q,
                    &sol.metric,
                    2.0 * config.solver.spacing,
                )?;
                manifest.trace = Some(sol.trace.clone());
                emit_solution(out_dir, "solution", &sol.field, &mut manifest.files)?;
                if config.emit_plot_data {
                    emit_plot_fields(
                        out_dir,
                        &config.q,
                        &sol.metric,
                        sol.field.grid(),
                        &mut manifest.files,
                    )?;
                }
                write_json(&out_dir.join("validation.json"), &report)?;
                manifest.files.push("validation.json".into());
                let (ok, failures) =
                    hard_invariants(&report, config.solver.residual_tol, true);
                manifest.hard_invariants_passed = ok;
                manifest.invariant_failures = failures;
                Ok(RunOutcome {
                    exit_code: if ok { EXIT_OK } else { EXIT_SOLVER_FAILURE },
                    message: format!(
                        "disk solve converged in {} outer iterations",
                        sol.trace.outer_iterations
                    ),
                })
            }
        }
        Scenario::Plane => {
            let sol = plane_glue_solve(&config.q, &config.solver)?;
            manifest.metric = "euclidean".into();
            manifest.grid = Some(GridHeader::of(sol.field.grid()));
            manifest.constants.gluing_constant = Some(sol.diagnostics.gluing_constant);
            manifest.constants.shift_constants = sol.trace.shift_constants.clone();
            let report = validate(
                &sol.field,
                &config.q,
                &BackgroundMetric::Euclidean,
                2.0 * config.solver.spacing,
            )?;
            manifest.trace = Some(sol.trace.clone());
            emit_solution(out_dir, "solution", &sol.field, &mut manifest.files)?;
            write_json(&out_dir.join("glue_diagnostics.json"), &sol.diagnostics)?;
            manifest.files.push("glue_diagnostics.json".into());
            if config.emit_plot_data {
                emit_plot_fields(
                    out_dir,
                    &config.q,
                    &BackgroundMetric::Euclidean,
                    sol.field.grid(),
                    &mut manifest.files,
                )?;
            }
            write_json(&out_dir.join("validation.json"), &report)?;
            manifest.files.push("validation.json".into());
            // The truncation rim carries the recorded c-envelope error, so
            // only residual-type invariants gate the exit status.
            let (ok, failures) = hard_invariants(&report, config.solver.residual_tol, false);
            manifest.hard_invariants_passed = ok;
            manifest.invariant_failures = failures;
            Ok(RunOutcome {
                exit_code: if ok { EXIT_OK } else { EXIT_SOLVER_FAILURE },
                message: format!(
                    "plane solve converged; gluing constant {:.6}",
                    sol.diagnostics.gluing_constant
                ),
            })
        }
        Scenario::FiniteZeros => {
            let sol = finite_zeros_solve(&config.q, &config.solver, config.domain_radius)?;
            manifest.metric = "euclidean".into();
            manifest.grid = Some(GridHeader::of(sol.field.grid()));
            manifest.constants.envelope_constant =
                Some(sol.diagnostics.envelope_constant);
            manifest.constants.shift_constants = sol.trace.shift_constants.clone();
            let report = validate(
                &sol.field,
                &config.q,
                &BackgroundMetric::Euclidean,
                2.0 * config.solver.spacing,
            )?;
            manifest.trace = Some(sol.trace.clone());
            emit_solution(out_dir, "solution", &sol.field, &mut manifest.files)?;
            write_json(&out_dir.join("envelope_diagnostics.json"), &sol.diagnostics)?;
            manifest.files.push("envelope_diagnostics.json".into());
            if config.emit_plot_data {
                emit_plot_fields(
                    out_dir,
                    &config.q,
                    &BackgroundMetric::Euclidean,
                    sol.field.grid(),
                    &mut manifest.files,
                )?;
            }
            write_json(&out_dir.join("validation.json"), &report)?;
            manifest.files.push("validation.json".into());
            // The incomplete solution does not satisfy the strict
            // complete-solution bounds; residuals gate the run.
            let (ok, failures) = hard_invariants(&report, config.solver.residual_tol, false);
            manifest.hard_invariants_passed = ok;
            manifest.invariant_failures = failures;
            Ok(RunOutcome {
                exit_code: if ok { EXIT_OK } else { EXIT_SOLVER_FAILURE },
                message: format!(
                    "finite-zeros solve converged; envelope constant {:.6}",
                    sol.diagnostics.envelope_constant
                ),
            })
        }
        Scenario::Radial => {
            let m = monomial_degree_of(&config.q)?;
            let sol = radial_disk_solve(
                r,
                m,
                config.rho_max,
                config.solver.spacing,
                config.solver.outer_tol,
                config.solver.residual_tol,
                config.solver.max_outer,
            )?;
            manifest.metric = "poincare_disk(1) (radial)".into();
            for k in 0..sol.components.len() {
                let file = format!("radial_w{}.csv", k + 1);
                write_profile_csv(&out_dir.join(&file), &sol.rho, &sol.components[k])?;
                manifest.files.push(file);
            }
            write_json(&out_dir.join("radial.json"), &sol)?;
            manifest.files.push("radial.json".into());
            let ok = sol.residual <= config.solver.residual_tol * 1.01;
            manifest.hard_invariants_passed = ok;
            if !ok {
                manifest
                    .invariant_failures
                    .push(format!("radial residual {:.3e}", sol.residual));
            }
            Ok(RunOutcome {
                exit_code: if ok { EXIT_OK } else { EXIT_SOLVER_FAILURE },
                message: format!("radial solve converged in {} iterations", sol.iterations),
            })
        }
        Scenario::ValidateOnly => {
            let path = validate_path.ok_or_else(|| {
                Error::Config("validate_only needs --validate PATH".into())
            })?;
            let metric = match config.metric {
                MetricKind::Euclidean => BackgroundMetric::Euclidean,
                MetricKind::PoincareDisk => {
                    BackgroundMetric::poincare_disk(config.domain_radius)
                }
            };
            let grid = Arc::new(DomainGrid::new(
                Region::disk(config.domain_radius),
                config.solver.spacing,
            )?);
            manifest.metric = format!("{:?}", config.metric);
            manifest.grid = Some(GridHeader::of(&grid));
            let w = crate::io::read_solution_csv(path, &grid, r)?;
            let report = validate(&w, &config.q, &metric, 2.0 * config.solver.spacing)?;
            write_json(&out_dir.join("validation.json"), &report)?;
            manifest.files.push("validation.json".into());
            let (ok, failures) = hard_invariants(&report, config.solver.residual_tol, false);
            manifest.hard_invariants_passed = ok;
            manifest.invariant_failures = failures;
            Ok(RunOutcome {
                exit_code: if ok { EXIT_OK } else { EXIT_SOLVER_FAILURE },
                message: "validation report written".to_string(),
            })
        }
    };

    match solve_result {
        Ok(outcome) => {
            write_json(&out_dir.join("manifest.json"), &manifest)?;
            Ok(outcome)
        }
        Err(e) => {
            manifest
                .invariant_failures
                .push(format!("solver failure: {e}"));
            write_json(&out_dir.join("manifest.json"), &manifest)?;
            Ok(RunOutcome {
                exit_code: EXIT_SOLVER_FAILURE,
                message: format!("solver failure: {e}"),
            })
        }
    }
}

fn monomial_degree_of(q: &crate::differential::RDifferential) -> Result<usize> {
    if q.is_zero() {
        return Ok(0);
    }
    if q.laurent_shift() > 0 {
        return Err(Error::Config(
            "the radial scenario needs a monomial differential".into(),
        ));
    }
    let deg = q.degree();
    for (k, c) in q.coeffs().iter().enumerate() {
        if k != deg && c.norm() != 0.0 {
            return Err(Error::Config(
                "the radial scenario needs a monomial differential z^m dz^r".into(),
            ));
        }
    }
    Ok(deg)
}
