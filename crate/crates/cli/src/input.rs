//! CSV ingestion: a header row, one numeric column per feature plus the
//! response.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::{DMatrix, DVector};

/// Parsed design with feature names in file order.
#[derive(Clone, Debug)]
pub struct Table {
    pub features: Vec<String>,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

pub fn read_table(path: &Path, response: &str) -> Result<Table> {
    let file =
        std::fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    parse_table(file, response).with_context(|| format!("reading {}", path.display()))
}

pub fn parse_table<R: std::io::Read>(reader: R, response: &str) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        bail!("input is empty: expected a header row");
    }
    let y_col = header.iter().position(|h| h == response).ok_or_else(|| {
        anyhow!(
            "response column `{response}` not found (columns: {})",
            header.join(", ")
        )
    })?;
    if header.len() < 2 {
        bail!("no feature columns besides the response `{response}`");
    }
    let mut values: Vec<Vec<f64>> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(i as u64 + 2, |p| p.line());
        let row = record
            .iter()
            .zip(&header)
            .map(|(field, name)| {
                field
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        anyhow!("line {line}, column `{name}`: `{field}` is not a finite number")
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        values.push(row);
    }
    let n = values.len();
    if n < 2 {
        bail!("need at least two data rows, found {n}");
    }
    let features: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != y_col)
        .map(|(_, h)| h.clone())
        .collect();
    let cols: Vec<usize> = (0..header.len()).filter(|&k| k != y_col).collect();
    let x = DMatrix::from_fn(n, cols.len(), |i, j| values[i][cols[j]]);
    let y = DVector::from_fn(n, |i, _| values[i][y_col]);
    Ok(Table { features, x, y })
}

impl Table {
    /// Subtract column means from every feature and the response.
    pub fn center(&mut self) {
        let n = self.x.nrows() as f64;
        for mut c in self.x.column_iter_mut() {
            let m = c.sum() / n;
            c.add_scalar_mut(-m);
        }
        let m = self.y.mean();
        self.y.add_scalar_mut(-m);
    }

    /// Divide each feature by its sample standard deviation.
    pub fn scale(&mut self) -> Result<()> {
        let n = self.x.nrows() as f64;
        for (j, mut c) in self.x.column_iter_mut().enumerate() {
            let m = c.sum() / n;
            let sd = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            if sd.is_nan() || sd <= 0.0 {
                bail!(
                    "column `{}` is constant and cannot be scaled",
                    self.features[j]
                );
            }
            c /= sd;
        }
        Ok(())
    }
}
