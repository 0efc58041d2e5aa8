//! CSV import/export of dense matrices: comma-delimited, one header row,
//! 17 significant digits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, RomError};
use crate::scalar::Real;

/// Formats with 17 significant digits, enough to round-trip any `f64`.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `m` row by row under a `c0,c1,...` header (or `header` if given).
pub fn write_matrix_csv<T: Real>(path: &Path, m: &DMatrix<T>, header: Option<&[String]>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let names: Vec<String> = match header {
        Some(h) => {
            if h.len() != m.ncols() {
                return Err(RomError::DimensionMismatch {
                    context: "CSV header",
                    expected: m.ncols(),
                    actual: h.len(),
                });
            }
            h.to_vec()
        }
        None => (0..m.ncols()).map(|j| format!("c{j}")).collect(),
    };
    writeln!(w, "{}", names.join(","))?;
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format_value(m[(i, j)].as_f64())).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a vector as a single column named `name`.
pub fn write_vector_csv<T: Real>(path: &Path, v: &DVector<T>, name: &str) -> Result<()> {
    let m = DMatrix::from_column_slice(v.len(), 1, v.as_slice());
    write_matrix_csv(path, &m, Some(&[name.to_string()]))
}

/// Reads a matrix written by [`write_matrix_csv`]; returns the header too.
pub fn read_matrix_csv<T: Real>(path: &Path) -> Result<(Vec<String>, DMatrix<T>)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let mut data = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record?;
        if record.len() != header.len() {
            return Err(RomError::Checkpoint(format!(
                "{}: row {} has {} fields, header has {}",
                path.display(),
                rows + 1,
                record.len(),
                header.len()
            )));
        }
        for field in record.iter() {
            let v: f64 = field.trim().parse().map_err(|_| {
                RomError::Checkpoint(format!("{}: cannot parse `{field}`", path.display()))
            })?;
            data.push(T::lit(v));
        }
        rows += 1;
    }
    // `header` may be empty only for a zero-column matrix
    let cols = if header.len() == 1 && header[0].is_empty() { 0 } else { header.len() };
    Ok((header, DMatrix::from_row_slice(rows, cols, &data)))
}

pub fn read_vector_csv<T: Real>(path: &Path) -> Result<DVector<T>> {
    let (_, m) = read_matrix_csv::<T>(path)?;
    if m.ncols() != 1 {
        return Err(RomError::Checkpoint(format!("{}: expected one column", path.display())));
    }
    Ok(m.column(0).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn matrices_round_trip_exactly(values in proptest::collection::vec(-1e300f64..1e300, 12)) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("m.csv");
            let m = DMatrix::from_row_slice(3, 4, &values);
            write_matrix_csv(&path, &m, None).unwrap();
            let (header, back) = read_matrix_csv::<f64>(&path).unwrap();
            prop_assert_eq!(header.len(), 4);
            prop_assert_eq!(back, m);
        }
    }

    #[test]
    fn empty_column_matrix_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        let m = DMatrix::<f64>::zeros(5, 0);
        write_matrix_csv(&path, &m, None).unwrap();
        let (_, back) = read_matrix_csv::<f64>(&path).unwrap();
        assert_eq!(back.ncols(), 0);
    }

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(format_value(0.1), "1.0000000000000001e-1");
        assert_eq!(format_value(-2.5), "-2.5000000000000000e0");
    }
}
