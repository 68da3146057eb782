//! Library side of the `exsel` command-line tool: CSV ingestion, config
//! files and the select / infer / simulate / validate drivers.

pub mod analysis;
pub mod config;
pub mod input;

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use exact_selective::inference::Method;
use exact_selective::study::{
    run_study, validate_pivot_uniformity, write_json, write_rows_csv, SimConfig, StudySummary,
    UniformityReport,
};
use serde::Serialize;

pub use analysis::{run_infer, run_select, InferReport, IntervalRow, SelectReport};

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn rows_to_csv<'a>(rows: impl IntoIterator<Item = &'a IntervalRow>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut any = false;
    for r in rows {
        w.serialize(r)?;
        any = true;
    }
    if !any {
        w.write_record([
            "method",
            "index",
            "name",
            "level",
            "estimate",
            "lower",
            "upper",
            "length",
            "significant",
            "clipped",
        ])?;
    }
    Ok(w.into_inner()?)
}

pub fn read_interval_csv(path: &Path) -> Result<Vec<IntervalRow>> {
    let mut r =
        csv::Reader::from_path(path).with_context(|| format!("cannot open {}", path.display()))?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.with_context(|| format!("{}: data row {}", path.display(), i + 1)))
        .collect()
}

/// Write to `path`, or to stdout when no path is given.
pub fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => {
            std::fs::write(p, bytes).with_context(|| format!("cannot write {}", p.display()))
        }
        None => {
            std::io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

/// Run a study and write `summary.json` and `replicates.csv` into `out_dir`.
pub fn run_simulate(config: &SimConfig, out_dir: &Path) -> Result<StudySummary> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create {}", out_dir.display()))?;
    let report = run_study(config)?;
    write_json(&report.summary, &out_dir.join("summary.json"))?;
    write_rows_csv(&report.rows, &out_dir.join("replicates.csv"))?;
    Ok(report.summary)
}

pub fn run_validate(config: &SimConfig, method: Method, shift: f64) -> Result<UniformityReport> {
    Ok(validate_pivot_uniformity(config, method, shift)?)
}
