use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::run::{AverageRow, ErrorRow, ExperimentReport};
use crate::error::{Error, Result};
use crate::fvm::SpeciesState;
use crate::grid::{FineGrid, Subdomain, SubdomainMap};

/// What [`write_outputs`] writes; `None`/empty members are skipped.
pub struct OutputSet<'a> {
    pub averages: Option<&'a [AverageRow]>,
    pub errors: &'a [ErrorRow],
    pub report: Option<&'a ExperimentReport>,
    pub snapshots: &'a [(usize, f64, SpeciesState)],
    pub grid: &'a FineGrid,
    pub subdomains: &'a SubdomainMap,
}

pub const AVERAGES_FILE: &str = "averages.csv";
pub const ERRORS_FILE: &str = "errors.csv";
pub const REPORT_FILE: &str = "report.json";

pub fn snapshot_file(step: usize) -> String {
    format!("snapshot_{step:05}.vtk")
}

/// Writes `averages.csv`, `errors.csv`, `report.json` and one VTK file per snapshot
/// into `dir`. On failure every file written so far is removed again.
pub fn write_outputs(dir: &Path, set: &OutputSet<'_>) -> Result<Vec<PathBuf>> {
    let created_dir = !dir.exists();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let result = write_all(dir, set, &mut written);
    if let Err(e) = result {
        for p in &written {
            let _ = std::fs::remove_file(p);
        }
        if created_dir {
            let _ = std::fs::remove_dir(dir);
        }
        return Err(e);
    }
    Ok(written)
}

fn write_all(dir: &Path, set: &OutputSet<'_>, written: &mut Vec<PathBuf>) -> Result<()> {
    let mut put = |name: &str, contents: String| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    if let Some(rows) = set.averages {
        put(AVERAGES_FILE, averages_csv(rows))?;
    }
    put(ERRORS_FILE, errors_csv(set.errors))?;
    if let Some(report) = set.report {
        let json = serde_json::to_string_pretty(report).map_err(|e| Error::Config(format!("report serialization: {e}")))?;
        put(REPORT_FILE, json)?;
    }
    for (step, time, state) in set.snapshots {
        put(&snapshot_file(*step), vtk_snapshot(set.grid, set.subdomains, state, *time)?)?;
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// `step,time,u1_m,u1_c,u2_m,u2_c,...`; an empty field marks an empty subdomain.
pub fn averages_csv(rows: &[AverageRow]) -> String {
    let l = rows.first().map_or(0, |r| r.background.len());
    let mut out = String::from("step,time");
    for k in 1..=l {
        let _ = write!(out, ",u{k}_m,u{k}_c");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{},{}", r.step, r.time);
        for (m, c) in r.background.iter().zip(&r.inclusion) {
            let _ = write!(out, ",{},{}", opt(*m), opt(*c));
        }
        out.push('\n');
    }
    out
}

/// `scheme,M,e_1,...,e_L,DOF,offline_time,online_time`; errors are fractions.
pub fn errors_csv(rows: &[ErrorRow]) -> String {
    let l = rows.iter().find_map(|r| r.errors.as_ref().map(Vec::len)).unwrap_or(2);
    let mut out = String::from("scheme,M");
    for k in 1..=l {
        let _ = write!(out, ",e_{k}");
    }
    out.push_str(",DOF,offline_time,online_time\n");
    for r in rows {
        let _ = write!(out, "{},{}", r.scheme, r.basis_count.map_or_else(String::new, |m| m.to_string()));
        for k in 0..l {
            let _ = write!(out, ",{}", opt(r.errors.as_ref().and_then(|e| e.get(k).copied())));
        }
        let _ = writeln!(out, ",{},{},{}", r.dof, r.offline_time, r.online_time);
    }
    out
}

/// Legacy ASCII VTK on a structured grid: cell fields `u1..uL` and `subdomain`.
pub fn vtk_snapshot(grid: &FineGrid, subdomains: &SubdomainMap, state: &SpeciesState, time: f64) -> Result<String> {
    let s = grid
        .structure()
        .ok_or_else(|| Error::invalid("VTK snapshots need a structured grid"))?;
    let [lx, ly] = grid.extent();
    let mut out = String::new();
    let _ = writeln!(out, "# vtk DataFile Version 3.0");
    let _ = writeln!(out, "rdms t={time}");
    let _ = writeln!(out, "ASCII");
    let _ = writeln!(out, "DATASET STRUCTURED_POINTS");
    let _ = writeln!(out, "DIMENSIONS {} {} 1", s.nx + 1, s.ny + 1);
    let _ = writeln!(out, "ORIGIN 0 0 0");
    let _ = writeln!(out, "SPACING {} {} 1", lx / s.nx as f64, ly / s.ny as f64);
    let _ = writeln!(out, "CELL_DATA {}", grid.n_cells());
    for (k, field) in state.u.iter().enumerate() {
        let _ = writeln!(out, "SCALARS u{} double 1", k + 1);
        let _ = writeln!(out, "LOOKUP_TABLE default");
        for v in field {
            let _ = writeln!(out, "{v}");
        }
    }
    let _ = writeln!(out, "SCALARS subdomain int 1");
    let _ = writeln!(out, "LOOKUP_TABLE default");
    for &l in subdomains.labels() {
        let _ = writeln!(out, "{}", u8::from(l == Subdomain::Inclusion));
    }
    Ok(out)
}

/// Reads the cell scalars of a file written by [`vtk_snapshot`].
pub fn read_vtk_cell_scalars(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::invalid(format!("{}: {msg}", path.display()));
    let mut lines = text.lines();
    let mut n_cells = None;
    let mut fields = Vec::new();
    while let Some(line) = lines.next() {
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("CELL_DATA") => {
                n_cells = Some(tok.next().and_then(|t| t.parse::<usize>().ok()).ok_or_else(|| bad("bad CELL_DATA"))?);
            }
            Some("SCALARS") => {
                let name = tok.next().ok_or_else(|| bad("unnamed scalar field"))?.to_string();
                let n = n_cells.ok_or_else(|| bad("SCALARS before CELL_DATA"))?;
                if lines.next().map(str::trim) != Some("LOOKUP_TABLE default") {
                    return Err(bad("missing lookup table"));
                }
                let values = (0..n)
                    .map(|_| lines.next().and_then(|l| l.trim().parse::<f64>().ok()).ok_or_else(|| bad("short field")))
                    .collect::<Result<Vec<_>>>()?;
                fields.push((name, values));
            }
            _ => {}
        }
    }
    Ok(fields)
}
