//! CSV loading for external designs and responses.
//!
//! Files are plain comma-separated numbers. A first row containing any
//! non-numeric field is taken as a header and skipped.

use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Result, SblError};
use crate::model::Dataset;

fn parse_matrix(path: &Path) -> Result<(Vec<f64>, usize, usize)> {
    let name = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| std::io::Error::new(e.kind(), format!("{name}: {e}")))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut values = Vec::new();
    let mut ncols = None;
    let mut nrows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let row = i + 1;
        if i == 0 && rec.iter().any(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        match ncols {
            None => ncols = Some(rec.len()),
            Some(c) if c != rec.len() => {
                return Err(SblError::Parse {
                    path: name,
                    row,
                    column: rec.len().min(c) + 1,
                    message: format!("expected {c} fields, found {}", rec.len()),
                })
            }
            _ => {}
        }
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| SblError::Parse {
                path: name.clone(),
                row,
                column: c + 1,
                message: format!("not a number: {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(SblError::Parse {
                    path: name.clone(),
                    row,
                    column: c + 1,
                    message: format!("non-finite value {field:?}"),
                });
            }
            values.push(v);
        }
        nrows += 1;
    }
    match ncols {
        Some(c) if nrows > 0 => Ok((values, nrows, c)),
        _ => Err(SblError::InvalidInput(format!("{name}: no numeric rows"))),
    }
}

/// Reads an `n × p` matrix.
pub fn load_matrix(path: &Path) -> Result<Array2<f64>> {
    let (v, n, p) = parse_matrix(path)?;
    Ok(Array2::from_shape_vec((n, p), v).expect("row lengths checked"))
}

/// Reads a response vector: one column, or a single row.
pub fn load_vector(path: &Path) -> Result<Array1<f64>> {
    let (v, n, p) = parse_matrix(path)?;
    if p != 1 && n != 1 {
        return Err(SblError::InvalidInput(format!(
            "{}: response must be a single column, found {n} x {p}",
            path.display()
        )));
    }
    Ok(Array1::from(v))
}

pub fn load_csv_dataset(x_path: &Path, y_path: &Path) -> Result<Dataset> {
    let x = load_matrix(x_path)?;
    let y = load_vector(y_path)?;
    if x.nrows() != y.len() {
        return Err(SblError::DimensionMismatch {
            what: "design rows vs response length",
            left: x.nrows(),
            right: y.len(),
        });
    }
    Dataset::new(x, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn header_is_optional() {
        let a = file("x1,x2\n1,2\n3,4\n");
        let b = file("1,2\n3,4\n");
        assert_eq!(load_matrix(a.path()).unwrap(), load_matrix(b.path()).unwrap());
    }

    #[test]
    fn reports_bad_cell() {
        let f = file("1,2\n3,abc\n");
        match load_matrix(f.path()) {
            Err(SblError::Parse { row, column, .. }) => assert_eq!((row, column), (2, 2)),
            other => panic!("{other:?}"),
        }
        let f = file("1,2\n3,NaN\n");
        assert!(matches!(
            load_matrix(f.path()),
            Err(SblError::Parse { row: 2, column: 2, .. })
        ));
    }

    #[test]
    fn dimension_and_zero_column_errors() {
        let x = file("1,0\n2,0\n3,0\n");
        let y3 = file("1\n2\n3\n");
        let y2 = file("1\n2\n");
        match load_csv_dataset(x.path(), y2.path()) {
            Err(e @ SblError::DimensionMismatch { .. }) => {
                let msg = e.to_string();
                assert!(msg.contains('3') && msg.contains('2'));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            load_csv_dataset(x.path(), y3.path()),
            Err(SblError::ZeroColumn(1))
        ));
    }
}
