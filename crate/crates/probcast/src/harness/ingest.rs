//! CSV ingestion: one series per column, with coordinate-bearing errors so
//! a bad cell is findable in the original file.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use crate::error::{Error, Result};
use crate::series::TimeSeries;

/// Reads a headered CSV into one series per non-time column.
///
/// Header names become series ids. When `time_column` names a column, its
/// values must be strictly increasing with uniform spacing (relative
/// tolerance 1e-6); the sampling rate is then inferred as 1/spacing and the
/// column is excluded from the output. All other sessions use
/// `default_rate`. Errors carry 1-based row and column coordinates.
pub fn ingest_csv(
    path: &Path,
    time_column: Option<&str>,
    default_rate: f64,
) -> Result<Vec<TimeSeries>> {
    let data_err = |reason: String| Error::Data {
        path: path.to_path_buf(),
        reason,
    };

    let file = File::open(path).map_err(|e| data_err(format!("cannot read file: {e}")))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| data_err(format!("cannot read header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(data_err("file is empty".into()));
    }
    if headers.iter().any(|h| h.is_empty()) {
        return Err(data_err("header row has an empty column name".into()));
    }
    {
        let mut seen = std::collections::BTreeSet::new();
        for h in &headers {
            if !seen.insert(h) {
                return Err(data_err(format!("duplicate column name `{h}`")));
            }
        }
    }
    let time_index = match time_column {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| data_err(format!("time column `{name}` not found in header")))?,
        ),
        None => None,
    };

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
    for record in reader.records() {
        let record = record.map_err(|e| data_err(format!("malformed csv: {e}")))?;
        let row = record.position().map_or(0, |p| p.line());
        if record.len() != headers.len() {
            return Err(data_err(format!(
                "row {row}: expected {} cells, found {}",
                headers.len(),
                record.len()
            )));
        }
        for (col, cell) in record.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| {
                data_err(format!(
                    "row {row}, column {} (`{}`): cannot parse `{cell}` as a number",
                    col + 1,
                    headers[col]
                ))
            })?;
            if !value.is_finite() {
                return Err(data_err(format!(
                    "row {row}, column {} (`{}`): non-finite value",
                    col + 1,
                    headers[col]
                )));
            }
            columns[col].push(value);
        }
    }
    if columns[0].is_empty() {
        return Err(data_err("no data rows after the header".into()));
    }

    let rate = match time_index {
        Some(t) => infer_rate(&columns[t], t, &headers[t]).map_err(&data_err)?,
        None => default_rate,
    };

    let mut out = Vec::new();
    for (col, values) in columns.into_iter().enumerate() {
        if Some(col) == time_index {
            continue;
        }
        out.push(TimeSeries::with_sampling_rate(
            headers[col].clone(),
            values,
            rate,
        )?);
    }
    Ok(out)
}

/// Sampling rate from a time column: spacing must be positive and uniform
/// within 1e-6 relative; the rate is 1 over the first spacing.
fn infer_rate(times: &[f64], col: usize, name: &str) -> std::result::Result<f64, String> {
    if times.len() < 2 {
        return Err(format!(
            "time column `{name}` needs at least 2 rows to infer a rate"
        ));
    }
    let dt = times[1] - times[0];
    if !(dt.is_finite() && dt > 0.0) {
        return Err(format!(
            "row 3, column {} (`{name}`): non-increasing time step",
            col + 1
        ));
    }
    for (i, pair) in times.windows(2).enumerate() {
        let step = pair[1] - pair[0];
        if ((step - dt) / dt).abs() > 1e-6 {
            return Err(format!(
                "row {}, column {} (`{name}`): non-uniform time step {step} (expected {dt})",
                i + 3,
                col + 1
            ));
        }
    }
    Ok(1.0 / dt)
}
