//! Output files. CSV floats carry 17 significant digits; JSON floats use the
//! shortest representation that parses back to the same `f64`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use gntk_core::Mat;
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub const EVOLUTION_HEADER: [&str; 8] = [
    "scheme",
    "t",
    "node_index",
    "node_coord",
    "prior_mean",
    "prior_std",
    "post_mean",
    "post_std",
];

pub const PATHS_HEADER: [&str; 6] = ["scheme", "t", "path", "node_index", "node_coord", "value"];

/// One row of `evolution.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionRow {
    pub scheme: String,
    pub t: f64,
    pub node_index: usize,
    pub node_coord: f64,
    pub prior_mean: f64,
    pub prior_std: f64,
    pub post_mean: f64,
    pub post_std: f64,
}

/// One row of `paths.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRow {
    pub scheme: String,
    pub t: f64,
    pub path: usize,
    pub node_index: usize,
    pub node_coord: f64,
    pub value: f64,
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_writer(path: &Path) -> CliResult<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(CliError::io(path))?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(BufWriter::new(file)))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    }
}

pub fn write_evolution(path: &Path, rows: &[EvolutionRow]) -> CliResult<()> {
    let mut w = csv_writer(path)?;
    w.write_record(EVOLUTION_HEADER).map_err(csv_err(path))?;
    for r in rows {
        w.write_record([
            r.scheme.clone(),
            fmt_f64(r.t),
            r.node_index.to_string(),
            fmt_f64(r.node_coord),
            fmt_f64(r.prior_mean),
            fmt_f64(r.prior_std),
            fmt_f64(r.post_mean),
            fmt_f64(r.post_std),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(CliError::io(path))
}

pub fn write_paths(path: &Path, rows: &[PathRow]) -> CliResult<()> {
    let mut w = csv_writer(path)?;
    w.write_record(PATHS_HEADER).map_err(csv_err(path))?;
    for r in rows {
        w.write_record([
            r.scheme.clone(),
            fmt_f64(r.t),
            r.path.to_string(),
            r.node_index.to_string(),
            fmt_f64(r.node_coord),
            fmt_f64(r.value),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(CliError::io(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let file = File::create(path).map_err(CliError::io(path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    })?;
    w.write_all(b"\n").map_err(CliError::io(path))?;
    w.flush().map_err(CliError::io(path))
}

/// Row-major nested vectors, the JSON shape of a matrix.
pub fn mat_rows(m: &Mat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}
