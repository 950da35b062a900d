//! File formats: legacy VTK structured points, CSV fields, observation
//! traces and iteration logs. All writers are byte-deterministic; floats
//! use the shortest representation that round-trips exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::domain::Grid3;
use crate::error::{Error, Result};
use crate::fields::{ObservationTrace, ScalarField};
use crate::optimizer::IterationRecord;

/// Legacy ASCII VTK STRUCTURED_POINTS file with one scalar dataset.
pub fn write_field_vtk(
    field: &ScalarField,
    grid: &Grid3,
    name: &str,
    path: &Path,
) -> Result<()> {
    field.check_shape(grid)?;
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{name}")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_POINTS")?;
    writeln!(w, "DIMENSIONS {} {} {}", grid.n[0], grid.n[1], grid.n[2])?;
    writeln!(w, "ORIGIN {} {} {}", grid.lo[0], grid.lo[1], grid.lo[2])?;
    writeln!(w, "SPACING {} {} {}", grid.h, grid.h, grid.h)?;
    writeln!(w, "POINT_DATA {}", grid.node_count())?;
    writeln!(w, "SCALARS {name} double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    // VTK expects x varying fastest, which is the native layout.
    for v in &field.data {
        writeln!(w, "{v}")?;
    }
    w.flush()?;
    Ok(())
}

/// CSV field rows: i,j,k,x1,x2,x3,value.
pub fn write_field_csv(field: &ScalarField, grid: &Grid3, path: &Path) -> Result<()> {
    field.check_shape(grid)?;
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "i,j,k,x1,x2,x3,value")?;
    for k in 0..grid.n[2] {
        for j in 0..grid.n[1] {
            for i in 0..grid.n[0] {
                let x = grid.coord(i, j, k);
                let v = field.data[grid.idx(i, j, k)];
                writeln!(w, "{i},{j},{k},{},{},{},{v}", x[0], x[1], x[2])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Read back a CSV field written by [`write_field_csv`].
pub fn read_field_csv(grid: &Grid3, path: &Path) -> Result<ScalarField> {
    let r = BufReader::new(File::open(path)?);
    let mut field = ScalarField::zeros(grid);
    let mut seen = 0usize;
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if lineno == 0 {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 7 {
            return Err(Error::Parse(format!(
                "{}:{}: expected 7 columns",
                path.display(),
                lineno + 1
            )));
        }
        let parse_idx = |s: &str| -> Result<usize> {
            s.parse::<usize>()
                .map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), lineno + 1)))
        };
        let (i, j, k) = (parse_idx(parts[0])?, parse_idx(parts[1])?, parse_idx(parts[2])?);
        let v: f64 = parts[6]
            .parse()
            .map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        if i >= grid.n[0] || j >= grid.n[1] || k >= grid.n[2] {
            return Err(Error::Parse(format!(
                "{}:{}: node ({i},{j},{k}) outside the grid",
                path.display(),
                lineno + 1
            )));
        }
        field.data[grid.idx(i, j, k)] = v;
        seen += 1;
    }
    if seen != grid.node_count() {
        return Err(Error::Parse(format!(
            "{}: {seen} rows for {} nodes",
            path.display(),
            grid.node_count()
        )));
    }
    Ok(field)
}

/// Observation trace CSV: a commented header carrying the run metadata,
/// then one row per (level, face node) with the three components.
pub fn write_trace_csv(trace: &ObservationTrace, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# emrecon trace v1")?;
    writeln!(
        w,
        "# n_levels={} tau={} axis={} face={}x{} omega={} noise_percent={} seed={}",
        trace.n_levels,
        trace.tau,
        trace.axis,
        trace.face_dims[0],
        trace.face_dims[1],
        trace.omega,
        trace.noise_percent,
        trace.seed.map(|s| s.to_string()).unwrap_or_else(|| "none".into()),
    )?;
    writeln!(w, "level,node,e1,e2,e3")?;
    let n_face = trace.n_face();
    for level in 0..trace.n_levels {
        for node in 0..n_face {
            let base = (level * n_face + node) * 3;
            writeln!(
                w,
                "{level},{node},{},{},{}",
                trace.values[base],
                trace.values[base + 1],
                trace.values[base + 2]
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv(path: &Path) -> Result<ObservationTrace> {
    let r = BufReader::new(File::open(path)?);
    let mut lines = r.lines();
    let bad = |msg: String| Error::Parse(format!("{}: {msg}", path.display()));
    lines
        .next()
        .transpose()?
        .filter(|l| l.starts_with("# emrecon trace"))
        .ok_or_else(|| bad("missing trace magic line".into()))?;
    let meta = lines
        .next()
        .transpose()?
        .ok_or_else(|| bad("missing metadata line".into()))?;
    let mut n_levels = 0usize;
    let mut tau = 0.0f64;
    let mut axis = 0usize;
    let mut face = [0usize; 2];
    let mut omega = 0.0f64;
    let mut noise_percent = 0.0f64;
    let mut seed: Option<u64> = None;
    for tok in meta.trim_start_matches('#').split_whitespace() {
        if let Some((key, value)) = tok.split_once('=') {
            match key {
                "n_levels" => n_levels = value.parse().map_err(|e| bad(format!("{e}")))?,
                "tau" => tau = value.parse().map_err(|e| bad(format!("{e}")))?,
                "axis" => axis = value.parse().map_err(|e| bad(format!("{e}")))?,
                "face" => {
                    let (a, b) = value
                        .split_once('x')
                        .ok_or_else(|| bad("bad face dims".into()))?;
                    face = [
                        a.parse().map_err(|e| bad(format!("{e}")))?,
                        b.parse().map_err(|e| bad(format!("{e}")))?,
                    ];
                }
                "omega" => omega = value.parse().map_err(|e| bad(format!("{e}")))?,
                "noise_percent" => noise_percent = value.parse().map_err(|e| bad(format!("{e}")))?,
                "seed" => {
                    seed = if value == "none" {
                        None
                    } else {
                        Some(value.parse().map_err(|e| bad(format!("{e}")))?)
                    }
                }
                _ => {}
            }
        }
    }
    let n_face = face[0] * face[1];
    if n_levels == 0 || n_face == 0 {
        return Err(bad("incomplete metadata".into()));
    }
    let mut trace = ObservationTrace {
        n_levels,
        tau,
        axis,
        face_dims: face,
        values: vec![0.0; n_levels * n_face * 3],
        noise_percent: noise_percent,
        seed,
        omega,
    };
    let mut rows = 0usize;
    for line in lines {
        let line = line?;
        if line.starts_with('#') || line.starts_with("level,") || line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 5 {
            return Err(bad(format!("row with {} columns", parts.len())));
        }
        let level: usize = parts[0].parse().map_err(|e| bad(format!("{e}")))?;
        let node: usize = parts[1].parse().map_err(|e| bad(format!("{e}")))?;
        if level >= n_levels || node >= n_face {
            return Err(bad(format!("row ({level},{node}) out of range")));
        }
        for c in 0..3 {
            trace.values[(level * n_face + node) * 3 + c] = parts[2 + c]
                .parse()
                .map_err(|e| bad(format!("{e}")))?;
        }
        rows += 1;
    }
    if rows != n_levels * n_face {
        return Err(bad(format!(
            "{rows} rows for {} samples",
            n_levels * n_face
        )));
    }
    Ok(trace)
}

/// Machine-parsable iteration log.
pub fn write_iteration_log(records: &[IterationRecord], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "iter,objective,grad_norm_eps,grad_norm_mu,alpha,max_eps,max_mu")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.iter, r.objective, r.grad_norm_eps, r.grad_norm_mu, r.alpha, r.max_eps, r.max_mu
        )?;
    }
    w.flush()?;
    Ok(())
}
