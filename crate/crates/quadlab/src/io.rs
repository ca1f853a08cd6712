//! CSV ingestion and emission.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use quadlab_core::regression::Dataset;
use thiserror::Error;

use crate::report::format_real;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("column `{0}` not found")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: `{value}` is not a number")]
    NonNumeric { row: usize, column: String, value: String },
    #[error("row {row} has {found} fields, header has {expected}")]
    Ragged { row: usize, expected: usize, found: usize },
    #[error("no data rows")]
    Empty,
    #[error(transparent)]
    Data(#[from] quadlab_core::CoreError),
}

/// Numeric CSV with its header.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericTable {
    pub headers: Vec<String>,
    pub values: DMatrix<f64>,
}

impl NumericTable {
    pub fn column_index(&self, name: &str) -> Result<usize, IoError> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IoError::MissingColumn(name.to_string()))
    }
}

/// Header plus raw records; `row` numbers in errors are 1-based file lines.
pub(crate) fn parse_records<R: Read>(reader: R) -> Result<(Vec<String>, Vec<Vec<String>>), IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(IoError::Ragged {
                row: i + 2,
                expected: header.len(),
                found: rec.len(),
            });
        }
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

pub(crate) fn parse_cell(cell: &str, row: usize, column: &str) -> Result<f64, IoError> {
    cell.parse::<f64>().map_err(|_| IoError::NonNumeric {
        row,
        column: column.to_string(),
        value: cell.to_string(),
    })
}

fn open(path: &Path) -> Result<File, IoError> {
    File::open(path).map_err(|e| IoError::Io(path.display().to_string(), e))
}

pub fn read_numeric<R: Read>(reader: R) -> Result<NumericTable, IoError> {
    let (headers, rows) = parse_records(reader)?;
    if rows.is_empty() {
        return Err(IoError::Empty);
    }
    let mut values = DMatrix::zeros(rows.len(), headers.len());
    for (i, rec) in rows.iter().enumerate() {
        for (j, cell) in rec.iter().enumerate() {
            values[(i, j)] = parse_cell(cell, i + 2, &headers[j])?;
        }
    }
    Ok(NumericTable { headers, values })
}

pub fn load_numeric(path: &Path) -> Result<NumericTable, IoError> {
    read_numeric(open(path)?)
}

/// Every column other than `target` becomes a regressor, in file order.
pub fn dataset_from(table: &NumericTable, target: &str) -> Result<Dataset, IoError> {
    let t = table.column_index(target)?;
    let cols: Vec<usize> = (0..table.headers.len()).filter(|&j| j != t).collect();
    let x = table.values.select_columns(&cols);
    let y = DVector::from_iterator(table.values.nrows(), table.values.column(t).iter().copied());
    Ok(Dataset::new(x, y)?)
}

pub fn load_csv(path: &Path, target: &str) -> Result<Dataset, IoError> {
    dataset_from(&load_numeric(path)?, target)
}

pub fn write_numeric<W: Write>(mut out: W, headers: &[String], values: &DMatrix<f64>) -> std::io::Result<()> {
    writeln!(out, "{}", headers.join(","))?;
    for i in 0..values.nrows() {
        let row: Vec<String> = values.row(i).iter().map(|&v| format_real(v)).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn dataset_headers(d: usize) -> Vec<String> {
    let mut h: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
    h.push("y".into());
    h
}

/// Design columns `x1..xd` followed by the response `y`.
pub fn dataset_matrix(data: &Dataset) -> DMatrix<f64> {
    let (n, d) = (data.n(), data.d());
    DMatrix::from_fn(n, d + 1, |i, j| if j < d { data.design()[(i, j)] } else { data.response()[i] })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two() {
        let t = read_numeric("x,y\n1,2\n3,4.5\n".as_bytes()).unwrap();
        let d = dataset_from(&t, "y").unwrap();
        assert_eq!((d.n(), d.d()), (2, 1));
        assert_eq!(d.response()[1], 4.5);
        assert_eq!(d.design()[(1, 0)], 3.0);
    }

    #[test]
    fn missing_target_names_column() {
        let t = read_numeric("x,y\n1,2\n".as_bytes()).unwrap();
        let e = dataset_from(&t, "z").unwrap_err();
        assert!(e.to_string().contains("`z`"));
    }

    #[test]
    fn bad_cell_and_ragged_rows() {
        let e = read_numeric("a,b\n1,2\n3,x\n".as_bytes()).unwrap_err();
        assert!(matches!(e, IoError::NonNumeric { row: 3, ref column, .. } if column == "b"));
        let e = read_numeric("a,b\n1,2\n3\n".as_bytes()).unwrap_err();
        assert!(matches!(e, IoError::Ragged { row: 3, expected: 2, found: 1 }));
        assert!(matches!(read_numeric("a,b\n".as_bytes()), Err(IoError::Empty)));
        let e = read_numeric("a\n1,5\n".as_bytes()).unwrap_err();
        assert!(matches!(e, IoError::Ragged { .. }));
    }

    #[test]
    fn decimal_point_only() {
        assert!(read_numeric("a\n1,5\n".as_bytes()).is_err());
        let t = read_numeric("a\n-1.25e-3\n".as_bytes()).unwrap();
        assert_eq!(t.values[(0, 0)], -1.25e-3);
    }

    #[test]
    fn write_then_read() {
        let data = Dataset::new(DMatrix::from_row_slice(2, 1, &[0.1, 1.0 / 3.0]), DVector::from_vec(vec![2.0, -7.5])).unwrap();
        let mut buf = Vec::new();
        write_numeric(&mut buf, &dataset_headers(1), &dataset_matrix(&data)).unwrap();
        let back = dataset_from(&read_numeric(buf.as_slice()).unwrap(), "y").unwrap();
        assert_eq!(back, data);
    }
}
