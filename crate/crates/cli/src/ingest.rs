//! CSV ingestion: comma-separated, header row, UTF-8, '.' decimal. Features
//! are min-max scaled to [-1, 1] and targets standardized, both with
//! training-split statistics only.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use wiski::loops::data::{split_with_options, RegressionDataset};

use crate::CliError;

/// Read a numeric CSV and produce the standardized pretrain/stream/test
/// splits. `target_column` may be a header name or a zero-based index.
pub fn ingest_csv(
    path: &Path,
    target_column: &str,
    standardize: bool,
    seed: u64,
) -> Result<RegressionDataset<f64>, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::missing_file(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let headers = reader
        .headers()
        .map_err(|e| CliError::malformed_csv(format!("cannot read header: {e}")))?
        .clone();
    let target_idx = match headers.iter().position(|h| h == target_column) {
        Some(i) => i,
        None => target_column.parse::<usize>().map_err(|_| {
            CliError::usage(format!(
                "target column '{target_column}' not found in header {:?}",
                headers.iter().collect::<Vec<_>>()
            ))
        })?,
    };
    if target_idx >= headers.len() {
        return Err(CliError::usage(format!(
            "target column index {target_idx} out of range for {} columns",
            headers.len()
        )));
    }

    let mut features: Vec<Vec<f64>> = Vec::new();
    let mut targets: Vec<f64> = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| CliError::malformed_csv(format!("row {}: {e}", row_idx + 2)))?;
        if record.len() != headers.len() {
            return Err(CliError::malformed_csv(format!(
                "row {} has {} fields, expected {}",
                row_idx + 2,
                record.len(),
                headers.len()
            )));
        }
        let mut row = Vec::with_capacity(headers.len() - 1);
        for (col_idx, cell) in record.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| {
                CliError::malformed_csv(format!(
                    "non-numeric cell at row {}, column {} ('{}')",
                    row_idx + 2,
                    headers.get(col_idx).unwrap_or(""),
                    cell
                ))
            })?;
            if col_idx == target_idx {
                targets.push(value);
            } else {
                row.push(value);
            }
        }
        features.push(row);
    }
    if features.is_empty() {
        return Err(CliError::malformed_csv("file contains a header but no data rows".into()));
    }

    let n = features.len();
    let d = features[0].len();
    if d == 0 {
        return Err(CliError::malformed_csv("no feature columns besides the target".into()));
    }
    let x = DMatrix::from_fn(n, d, |i, j| features[i][j]);
    let y = DVector::from_fn(n, |i, _| targets[i]);
    if !standardize {
        log::warn!("target standardization disabled; targets used at raw scale");
    }
    Ok(split_with_options(x, y, 0.1, 0.05, seed, standardize)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(name: &str, contents: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("wiski-ingest-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        path
    }

    #[test]
    fn minmax_endpoints_and_target_standardization() {
        let path = write_tmp("two_rows.csv", "x,y\n0,1\n10,3\n");
        let ds = ingest_csv(&path, "y", true, 0).unwrap();
        // n=2: the 10% test split rounds to zero rows, everything streams
        assert_eq!(ds.x_test.nrows(), 0);
        let mut xs: Vec<f64> = ds
            .x_pretrain
            .iter()
            .chain(ds.x_stream.iter())
            .copied()
            .collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(xs, vec![-1.0, 1.0]);
        let mut ys: Vec<f64> = ds
            .y_pretrain
            .iter()
            .chain(ds.y_stream.iter())
            .copied()
            .collect();
        ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // mean 2, population sd 1
        assert!((ys[0] + 1.0).abs() < 1e-12);
        assert!((ys[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn header_only_file_is_empty_dataset_error() {
        let path = write_tmp("header_only.csv", "a,b,y\n");
        let err = ingest_csv(&path, "y", true, 0).unwrap_err();
        assert_eq!(err.code(), 4);
    }

    #[test]
    fn non_numeric_cell_reports_row_and_column() {
        let path = write_tmp("bad_cell.csv", "a,y\n1.0,2.0\nfoo,3.0\n");
        let err = ingest_csv(&path, "y", true, 0).unwrap_err();
        assert_eq!(err.code(), 4);
        let msg = err.to_string();
        assert!(msg.contains("row 3"), "message: {msg}");
        assert!(msg.contains('a'), "message: {msg}");
    }

    #[test]
    fn target_by_index_and_missing_target() {
        let path = write_tmp("indexed.csv", "a,b\n1,2\n3,4\n5,6\n7,8\n");
        assert!(ingest_csv(&path, "1", true, 0).is_ok());
        assert_eq!(ingest_csv(&path, "nope", true, 0).unwrap_err().code(), 2);
    }

    #[test]
    fn missing_file_is_exit_3() {
        let err = ingest_csv(std::path::Path::new("/definitely/not/here.csv"), "y", true, 0)
            .unwrap_err();
        assert_eq!(err.code(), 3);
    }
}
