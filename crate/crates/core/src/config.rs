//! Flat key=value run configuration with JSON values for lists.
//!
//! Example:
//!
//! ```text
//! scenario = disk
//! q = "poly r=3 coeffs=[0,1]"
//! spacing = 0.02
//! outer_tol = 1e-6
//! ```

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::Serialize;

use crate::differential::RDifferential;
use crate::error::{Error, Result};
use crate::iteration::SolverConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Scenario {
    Disk,
    Plane,
    FiniteZeros,
    Radial,
    ValidateOnly,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Disk => "disk",
            Scenario::Plane => "plane",
            Scenario::FiniteZeros => "finite_zeros",
            Scenario::Radial => "radial",
            Scenario::ValidateOnly => "validate_only",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MetricKind {
    Euclidean,
    PoincareDisk,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub q: RDifferential,
    pub metric: MetricKind,
    pub solver: SolverConfig,
    pub domain_radius: f64,
    /// Run the disk scenario through the exhaustion construction.
    pub use_exhaustion: bool,
    pub rho_max: f64,
    pub emit_plot_data: bool,
    pub seed: u64,
    pub threads: usize,
    /// Raw key/value pairs, echoed into the manifest.
    pub echo: BTreeMap<String, String>,
}

fn parse_value(raw: &str) -> String {
    let t = raw.trim();
    let t = t.strip_prefix('"').unwrap_or(t);
    let t = t.strip_suffix('"').unwrap_or(t);
    t.to_string()
}

fn parse_f64(map: &BTreeMap<String, String>, key: &str, default: f64) -> Result<f64> {
    match map.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse()
            .map_err(|_| Error::Config(format!("key `{key}`: expected a number, got `{v}`"))),
    }
}

fn parse_usize(map: &BTreeMap<String, String>, key: &str, default: usize) -> Result<usize> {
    match map.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse()
            .map_err(|_| Error::Config(format!("key `{key}`: expected an integer, got `{v}`"))),
    }
}

fn parse_bool(map: &BTreeMap<String, String>, key: &str, default: bool) -> Result<bool> {
    match map.get(key).map(|s| s.as_str()) {
        None => Ok(default),
        Some("true") | Some("1") => Ok(true),
        Some("false") | Some("0") => Ok(false),
        Some(v) => Err(Error::Config(format!(
            "key `{key}`: expected true/false, got `{v}`"
        ))),
    }
}

/// Parse a differential spec of the form `poly r=3 coeffs=[0,1]`, where
/// each coefficient is a number or a [re, im] pair.
pub fn parse_differential(spec: &str, laurent_shift: u32) -> Result<RDifferential> {
    let mut order: Option<u32> = None;
    let mut coeffs: Option<Vec<Complex64>> = None;
    let spec = spec.trim();
    let body = spec
        .strip_prefix("poly")
        .ok_or_else(|| Error::Config(format!("q spec must start with `poly`: `{spec}`")))?;
    for token in body.split_whitespace() {
        if let Some(v) = token.strip_prefix("r=") {
            order = Some(v.parse().map_err(|_| {
                Error::Config(format!("q spec: bad order `{v}`"))
            })?);
        } else if let Some(v) = token.strip_prefix("coeffs=") {
            let parsed: serde_json::Value = serde_json::from_str(v)
                .map_err(|e| Error::Config(format!("q spec: bad coeffs `{v}`: {e}")))?;
            let arr = parsed
                .as_array()
                .ok_or_else(|| Error::Config("q spec: coeffs must be a JSON list".into()))?;
            let mut out = Vec::with_capacity(arr.len());
            for item in arr {
                let c = if let Some(x) = item.as_f64() {
                    Complex64::new(x, 0.0)
                } else if let Some(pair) = item.as_array() {
                    if pair.len() != 2 {
                        return Err(Error::Config(
                            "q spec: complex coefficient must be [re, im]".into(),
                        ));
                    }
                    Complex64::new(
                        pair[0].as_f64().ok_or_else(|| {
                            Error::Config("q spec: bad complex coefficient".into())
                        })?,
                        pair[1].as_f64().ok_or_else(|| {
                            Error::Config("q spec: bad complex coefficient".into())
                        })?,
                    )
                } else {
                    return Err(Error::Config("q spec: bad coefficient entry".into()));
                };
                out.push(c);
            }
            coeffs = Some(out);
        } else {
            return Err(Error::Config(format!("q spec: unknown token `{token}`")));
        }
    }
    let order = order.ok_or_else(|| Error::Config("q spec: missing r=".into()))?;
    let coeffs = coeffs.ok_or_else(|| Error::Config("q spec: missing coeffs=".into()))?;
    RDifferential::with_laurent(order, coeffs, laurent_shift)
}

impl RunConfig {
    /// Parse the flat key=value format. `#` starts a comment.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut map = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            let key = key.trim().to_string();
            if map.contains_key(&key) {
                return Err(Error::Config(format!(
                    "line {}: duplicate key `{key}`",
                    lineno + 1
                )));
            }
            map.insert(key, parse_value(value));
        }
        RunConfig::from_map(map)
    }

    pub fn from_map(map: BTreeMap<String, String>) -> Result<RunConfig> {
        let scenario = match map
            .get("scenario")
            .ok_or_else(|| Error::Config("missing key `scenario`".into()))?
            .as_str()
        {
            "disk" => Scenario::Disk,
            "plane" => Scenario::Plane,
            "finite_zeros" => Scenario::FiniteZeros,
            "radial" => Scenario::Radial,
            "validate_only" => Scenario::ValidateOnly,
            other => {
                return Err(Error::Config(format!(
                    "key `scenario`: unknown scenario `{other}`"
                )))
            }
        };
        let laurent_shift = parse_usize(&map, "laurent_shift", 0)? as u32;
        let q = match map.get("q") {
            Some(spec) => parse_differential(spec, laurent_shift)?,
            None => {
                let r = parse_usize(&map, "r", 0)?;
                if r < 2 {
                    return Err(Error::Config(
                        "missing key `q` (or a standalone `r` for q = 0)".into(),
                    ));
                }
                RDifferential::zero(r as u32)
            }
        };
        if let Some(rv) = map.get("r") {
            let r: u32 = rv
                .parse()
                .map_err(|_| Error::Config(format!("key `r`: bad integer `{rv}`")))?;
            if r != q.order() {
                return Err(Error::Config(format!(
                    "key `r` = {r} disagrees with the q spec order {}",
                    q.order()
                )));
            }
        }
        let metric = match map.get("metric").map(|s| s.as_str()) {
            None => match scenario {
                Scenario::Disk => MetricKind::PoincareDisk,
                _ => MetricKind::Euclidean,
            },
            Some("euclidean") => MetricKind::Euclidean,
            Some("poincare_disk") => MetricKind::PoincareDisk,
            Some(other) => {
                return Err(Error::Config(format!(
                    "key `metric`: unknown metric `{other}`"
                )))
            }
        };
        let defaults = SolverConfig::default();
        let solver = SolverConfig {
            spacing: parse_f64(&map, "spacing", defaults.spacing)?,
            outer_tol: parse_f64(&map, "outer_tol", defaults.outer_tol)?,
            residual_tol: parse_f64(&map, "residual_tol", defaults.residual_tol)?,
            max_outer: parse_usize(&map, "max_outer", defaults.max_outer)?,
            linear_tol: parse_f64(&map, "linear_tol", defaults.linear_tol)?,
            max_linear: parse_usize(&map, "max_linear", defaults.max_linear)?,
            exhaustion_levels: parse_usize(&map, "exhaustion_levels", defaults.exhaustion_levels)?,
            truncation_radius: parse_f64(&map, "truncation_radius", defaults.truncation_radius)?,
        };
        solver.validate()?;
        let config = RunConfig {
            scenario,
            q,
            metric,
            solver,
            domain_radius: parse_f64(&map, "domain_radius", 1.0)?,
            use_exhaustion: parse_bool(&map, "exhaustion", false)?,
            rho_max: parse_f64(&map, "rho_max", 0.95)?,
            emit_plot_data: parse_bool(&map, "emit_plot_data", false)?,
            seed: parse_usize(&map, "seed", 0)? as u64,
            threads: parse_usize(&map, "threads", 0)?,
            echo: map,
        };
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_differential_specs() {
        let q = parse_differential("poly r=3 coeffs=[0,1]", 0).unwrap();
        assert_eq!(q.order(), 3);
        assert_eq!(q.degree(), 1);
        assert_eq!(q.coeffs()[1], Complex64::new(1.0, 0.0));

        let q = parse_differential("poly r=2 coeffs=[[0,1],2]", 0).unwrap();
        assert_eq!(q.coeffs()[0], Complex64::new(0.0, 1.0));

        assert!(parse_differential("poly coeffs=[1]", 0).is_err());
        assert!(parse_differential("fourier r=2", 0).is_err());
    }

    #[test]
    fn parse_full_config() {
        let text = r#"
# a comment
scenario = disk
q = "poly r=2 coeffs=[0,1]"
spacing = 0.05
outer_tol = 1e-6
linear_tol = 1e-8
emit_plot_data = true
seed = 7
"#;
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.scenario, Scenario::Disk);
        assert_eq!(cfg.q.order(), 2);
        assert_eq!(cfg.metric, MetricKind::PoincareDisk);
        assert!(cfg.emit_plot_data);
        assert_eq!(cfg.seed, 7);
        assert!((cfg.solver.spacing - 0.05).abs() < 1e-15);
    }

    #[test]
    fn diagnostics_carry_line_and_key() {
        let err = RunConfig::parse("scenario = disk\nspacing 0.05\n").unwrap_err();
        assert!(err.to_string().contains("line 2"));
        let err = RunConfig::parse("scenario = disk\nr = 2\nspacing = abc\n").unwrap_err();
        assert!(err.to_string().contains("spacing"));
        let err = RunConfig::parse("scenario = warp\n").unwrap_err();
        assert!(err.to_string().contains("warp"));
        // r disagreeing with the q spec is rejected.
        let err = RunConfig::parse("scenario = disk\nq = \"poly r=3 coeffs=[1]\"\nr = 2\n")
            .unwrap_err();
        assert!(err.to_string().contains("disagrees"));
    }
}
