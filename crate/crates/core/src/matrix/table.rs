use std::fs::File;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Numeric CSV contents: optional header plus row-major 64-bit values.
#[derive(Debug, Clone)]
pub struct NumericTable {
    pub path: PathBuf,
    pub header: Option<Vec<String>>,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl NumericTable {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.values)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.as_ref()?.iter().position(|h| h == name)
    }
}

/// Reads a comma-separated numeric table.
///
/// The first row is treated as a header when any of its cells fails to parse
/// as a number. Every other cell must parse; the error names the offending
/// row (1-based, counting the header) and column.
pub fn read_numeric_csv(path: &Path) -> Result<NumericTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut header = None;
    let mut values = Vec::new();
    let mut cols = 0;
    let mut rows = 0;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(path, e.to_string()))?;
        if line == 0 {
            cols = record.len();
            if record.iter().any(|c| c.parse::<f64>().is_err()) {
                header = Some(record.iter().map(str::to_owned).collect());
                continue;
            }
        }
        if record.len() != cols {
            return Err(Error::parse(
                path,
                format!("row {} has {} fields, expected {}", line + 1, record.len(), cols),
            ));
        }
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                let name = header
                    .as_ref()
                    .and_then(|h: &Vec<String>| h.get(c).cloned())
                    .unwrap_or_else(|| format!("#{}", c + 1));
                Error::parse(
                    path,
                    format!("non-numeric cell {cell:?} at row {}, column {name}", line + 1),
                )
            })?;
            if !v.is_finite() {
                return Err(Error::parse(
                    path,
                    format!("non-finite value at row {}, column {}", line + 1, c + 1),
                ));
            }
            values.push(v);
        }
        rows += 1;
    }
    Ok(NumericTable {
        path: path.to_owned(),
        header,
        rows,
        cols,
        values,
    })
}
