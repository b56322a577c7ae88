//! CSV and JSON artifacts. Floats are written in shortest round-trip form,
//! so reading a file back gives bit-identical values.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use alspce_core::active::{AlState, IterationRecord};
use alspce_core::reliability::reliability_index;
use alspce_core::SpceModel;
use anyhow::{bail, Context, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// One row of a convergence history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub sigma_eps: f64,
    pub pf_raw: f64,
    pub pf_smoothed: f64,
    pub beta_smoothed: f64,
}

impl From<&IterationRecord> for ConvergenceRow {
    fn from(r: &IterationRecord) -> Self {
        Self {
            n: r.n,
            sigma_eps: r.sigma_eps,
            pf_raw: r.pf_raw,
            pf_smoothed: r.pf_smoothed,
            beta_smoothed: reliability_index(r.pf_smoothed),
        }
    }
}

pub fn write_convergence(path: &Path, history: &[IterationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in history {
        w.serialize(ConvergenceRow::from(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_convergence(path: &Path) -> Result<Vec<ConvergenceRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize().map(|row| row.with_context(|| format!("reading {}", path.display()))).collect()
}

fn x_header(m: usize) -> Vec<String> {
    (1..=m).map(|j| format!("x_{j}")).collect()
}

/// Experimental design with the loop iteration that added each point.
pub fn write_design(path: &Path, state: &AlState) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let mut header = x_header(state.ed_x.ncols());
    header.push("y".into());
    header.push("iteration".into());
    w.write_record(&header)?;
    for i in 0..state.ed_y.len() {
        let mut rec: Vec<String> = state.ed_x.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(state.ed_y[i].to_string());
        rec.push(state.ed_iteration[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Points with an optional response column.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub x: DMatrix<f64>,
    pub y: Option<Vec<f64>>,
}

/// Reads a CSV whose header is `x_1..x_M` optionally followed by `y`.
pub fn read_table(path: &Path) -> Result<Table> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let header: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let has_y = header.last().is_some_and(|h| h == "y");
    let m = header.len() - usize::from(has_y);
    if m == 0 {
        bail!("{}: no input columns", path.display());
    }
    if header[..m] != x_header(m)[..] {
        bail!("{}: expected header x_1..x_{m}{}, got {:?}", path.display(), if has_y { ", y" } else { "" }, header);
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .with_context(|| format!("{}: bad number on data row {}", path.display(), line + 1))?;
        if vals.iter().any(|v| !v.is_finite()) {
            bail!("{}: non-finite value on data row {}", path.display(), line + 1);
        }
        xs.extend_from_slice(&vals[..m]);
        if has_y {
            ys.push(vals[m]);
        }
    }
    let n = xs.len() / m;
    Ok(Table { x: DMatrix::from_row_slice(n, m, &xs), y: has_y.then_some(ys) })
}

pub fn write_table(path: &Path, x: &DMatrix<f64>, y: Option<&[f64]>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let mut header = x_header(x.ncols());
    if y.is_some() {
        header.push("y".into());
    }
    w.write_record(&header)?;
    for i in 0..x.nrows() {
        let mut rec: Vec<String> = x.row(i).iter().map(|v| v.to_string()).collect();
        if let Some(y) = y {
            rec.push(y[i].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(f)).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_model(path: &Path, model: &SpceModel) -> Result<()> {
    write_json(path, model)
}

pub fn read_model(path: &Path) -> Result<SpceModel> {
    read_json(path)
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}
