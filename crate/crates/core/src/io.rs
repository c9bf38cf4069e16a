//! CSV ingestion and output for matrices and vectors.
//!
//! Files are comma-separated with an optional header row. A first row that
//! does not parse as numbers is treated as the header.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let file = File::open(path).map_err(|e| {
        Error::Invalid(format!("cannot open {}: {e}", path.display()))
    })?;
    parse_matrix(file, &path.display().to_string())
}

pub fn parse_matrix<R: std::io::Read>(src: R, label: &str) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(src);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(v) => rows.push(v),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(Error::Invalid(format!("{label}: line {}: {e}", i + 1))),
        }
    }
    if rows.is_empty() {
        return Err(Error::Invalid(format!("{label}: no numeric rows")));
    }
    let ncol = rows[0].len();
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncol) {
        return Err(Error::Dimension(format!("{label}: row {} has {} fields, expected {ncol}", i + 1, r.len())));
    }
    Ok(DMatrix::from_fn(rows.len(), ncol, |i, j| rows[i][j]))
}

/// Reads a single-column file (or a single-row file) as a vector.
pub fn read_vector(path: &Path) -> Result<DVector<f64>> {
    let m = read_matrix(path)?;
    if m.ncols() == 1 {
        Ok(m.column(0).into_owned())
    } else if m.nrows() == 1 {
        Ok(m.row(0).transpose())
    } else {
        Err(Error::Dimension(format!("{}: expected a vector, got {}x{}", path.display(), m.nrows(), m.ncols())))
    }
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>, header: Option<&[String]>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if let Some(h) = header {
        w.write_record(h)?;
    }
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|v| format!("{v:.17e}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_lines(path: &Path, values: &[f64]) -> Result<()> {
    let mut f = File::create(path)?;
    for v in values {
        writeln!(f, "{v:.17e}")?;
    }
    Ok(())
}
