//! Grid dumps and manifests: CSV fields with lattice indices and
//! coordinates, JSON for structured reports.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::field::ScalarField;
use crate::geometry::grid::DomainGrid;
use crate::toda::TodaField;

/// Header data accompanying a grid dump.
#[derive(Debug, Clone, Serialize)]
pub struct GridHeader {
    pub region_kind: String,
    pub spacing: f64,
    pub node_count: usize,
    pub interior_count: usize,
    pub boundary_count: usize,
}

impl GridHeader {
    pub fn of(grid: &DomainGrid) -> GridHeader {
        GridHeader {
            region_kind: grid.region.kind_name().to_string(),
            spacing: grid.spacing,
            node_count: grid.node_count(),
            interior_count: grid.interior_count(),
            boundary_count: grid.boundary_count(),
        }
    }
}

pub fn write_scalar_csv(path: &Path, field: &ScalarField) -> Result<()> {
    let grid = field.grid();
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "i,j,x,y,value")?;
    for c in grid.all_nodes() {
        let (i, j) = grid.lattice_of(c);
        let z = grid.z_of(c);
        writeln!(out, "{i},{j},{:.17e},{:.17e},{:.17e}", z.re, z.im, field.get(c))?;
    }
    Ok(())
}

pub fn write_solution_csv(path: &Path, w: &TodaField) -> Result<()> {
    let grid = w.grid();
    let mut out = BufWriter::new(File::create(path)?);
    let header: Vec<String> = (1..=w.n()).map(|k| format!("w_{k}")).collect();
    writeln!(out, "i,j,x,y,{}", header.join(","))?;
    for c in grid.all_nodes() {
        let (i, j) = grid.lattice_of(c);
        let z = grid.z_of(c);
        let vals: Vec<String> = (0..w.n())
            .map(|k| format!("{:.17e}", w.component(k).get(c)))
            .collect();
        writeln!(out, "{i},{j},{:.17e},{:.17e},{}", z.re, z.im, vals.join(","))?;
    }
    Ok(())
}

/// Read a solution CSV back onto a freshly built grid. Every masked-in
/// node must be present; extra rows are rejected.
pub fn read_solution_csv(path: &Path, grid: &Arc<DomainGrid>, r: u32) -> Result<TodaField> {
    let n = (r / 2) as usize;
    let file = BufReader::new(File::open(path)?);
    let mut lines = file.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Config("empty solution file".into()))??;
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.len() != 4 + n || cols[0] != "i" {
        return Err(Error::Config(format!(
            "expected header i,j,x,y,w_1..w_{n}, got {header}"
        )));
    }
    let mut values: Vec<Vec<f64>> = vec![vec![f64::NAN; grid.node_count()]; n];
    let mut seen = 0usize;
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.trim().split(',').collect();
        if parts.len() != 4 + n {
            return Err(Error::Config(format!(
                "line {}: expected {} fields, got {}",
                lineno + 2,
                4 + n,
                parts.len()
            )));
        }
        let i: usize = parts[0]
            .parse()
            .map_err(|_| Error::Config(format!("line {}: bad i index", lineno + 2)))?;
        let j: usize = parts[1]
            .parse()
            .map_err(|_| Error::Config(format!("line {}: bad j index", lineno + 2)))?;
        let c = grid.compact_at(i, j).ok_or_else(|| {
            Error::Config(format!("line {}: node ({i},{j}) not in the domain", lineno + 2))
        })?;
        for k in 0..n {
            values[k][c] = parts[4 + k]
                .parse()
                .map_err(|_| Error::Config(format!("line {}: bad value", lineno + 2)))?;
        }
        seen += 1;
    }
    if seen != grid.node_count() {
        return Err(Error::Config(format!(
            "solution file covers {seen} of {} nodes",
            grid.node_count()
        )));
    }
    let components = values
        .into_iter()
        .map(|v| ScalarField::from_values(grid.clone(), v))
        .collect::<Result<Vec<_>>>()?;
    TodaField::new(r, components)
}

/// Two-column radial profile (rho, value).
pub fn write_profile_csv(path: &Path, rho: &[f64], values: &[f64]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "rho,value")?;
    for (x, v) in rho.iter().zip(values) {
        writeln!(out, "{x:.17e},{v:.17e}")?;
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}
