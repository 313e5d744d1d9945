//! CSV input and tidy CSV output.
//!
//! Input files carry a header row with the columns `x`, `time` and `status`
//! (0 censored, 1 failure) and optionally an integer `group`. Column order is
//! free and extra columns are ignored.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use hazrisk_core::{SurvivalDataset, SurvivalSample};
use serde::Serialize;

use crate::{HazriskError, Result};

struct Columns {
    x: usize,
    time: usize,
    status: usize,
    group: Option<usize>,
}

impl Columns {
    fn locate(headers: &csv::StringRecord) -> Result<Self> {
        let find = |name: &str| headers.iter().position(|h| h.trim() == name);
        let required = |name: &str| find(name).ok_or_else(|| HazriskError::Schema(format!("missing required column `{name}`")));
        Ok(Columns { x: required("x")?, time: required("time")?, status: required("status")?, group: find("group") })
    }
}

fn field<'a>(record: &'a csv::StringRecord, idx: usize, name: &str, line: u64) -> Result<&'a str> {
    record.get(idx).map(str::trim).ok_or_else(|| HazriskError::Csv { line, message: format!("missing `{name}` field") })
}

fn real(record: &csv::StringRecord, idx: usize, name: &str, line: u64) -> Result<f64> {
    let raw = field(record, idx, name, line)?;
    let v: f64 = raw.parse().map_err(|_| HazriskError::Csv { line, message: format!("`{name}` is not a number: {raw:?}") })?;
    if !v.is_finite() {
        return Err(HazriskError::Csv { line, message: format!("`{name}` is not finite") });
    }
    Ok(v)
}

/// Parses a survival dataset; any invalid row aborts with its line number.
pub fn read_dataset<R: Read>(reader: R) -> Result<SurvivalDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| HazriskError::Csv { line: 1, message: e.to_string() })?.clone();
    let cols = Columns::locate(&headers)?;
    let mut samples = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let fallback = k as u64 + 2;
        let record = record
            .map_err(|e| HazriskError::Csv { line: e.position().map_or(fallback, |p| p.line()), message: e.to_string() })?;
        let line = record.position().map_or(fallback, |p| p.line());
        let x = real(&record, cols.x, "x", line)?;
        let time = real(&record, cols.time, "time", line)?;
        if time <= 0.0 {
            return Err(HazriskError::Csv { line, message: "`time` must be positive".into() });
        }
        let event = match field(&record, cols.status, "status", line)? {
            "0" => false,
            "1" => true,
            other => return Err(HazriskError::Csv { line, message: format!("`status` must be 0 or 1, got {other:?}") }),
        };
        let mut sample = SurvivalSample::new(x, time, event);
        if let Some(g) = cols.group {
            let raw = field(&record, g, "group", line)?;
            let label: i64 =
                raw.parse().map_err(|_| HazriskError::Csv { line, message: format!("`group` is not an integer: {raw:?}") })?;
            sample = sample.with_group(label);
        }
        samples.push(sample);
    }
    if samples.is_empty() {
        return Err(HazriskError::Schema("no data rows".into()));
    }
    SurvivalDataset::new(samples).map_err(|e| match e {
        hazrisk_core::Error::NoFailures => HazriskError::Schema("every subject is censored".into()),
        other => HazriskError::Estimation(other),
    })
}

pub fn read_dataset_path(path: &Path) -> Result<SurvivalDataset> {
    let file = File::open(path).map_err(|source| HazriskError::Io { path: path.to_path_buf(), source })?;
    read_dataset(file)
}

/// Writes `records` as CSV with a header taken from the field names.
pub fn write_csv<W: Write, T: Serialize>(writer: W, records: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r).map_err(|e| HazriskError::Internal(e.to_string()))?;
    }
    w.flush().map_err(|e| HazriskError::Internal(e.to_string()))
}

pub fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|source| HazriskError::Io { path: path.to_path_buf(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_columns_in_any_order() {
        let data = read_dataset("status,time,x,group\n1,2.0,0.5,1\n0,1.0,-0.5,2\n".as_bytes()).unwrap();
        assert_eq!(data.len(), 2);
        let first = data.samples()[0];
        assert_eq!((first.covariate, first.time, first.event, first.group), (-0.5, 1.0, false, Some(2)));
    }

    #[test]
    fn missing_status_is_a_schema_error() {
        let err = read_dataset("x,time\n0.1,1.0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, HazriskError::Schema(_)));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn bad_rows_name_their_line() {
        for (body, line) in [
            ("x,time,status\n0.1,1.0,1\n0.2,abc,1\n", 3),
            ("x,time,status\n0.1,1.0,1\n0.2,1.0,1\n0.3,1.0,2\n", 4),
            ("x,time,status\n0.1,-1.0,1\n", 2),
            ("x,time,status,group\n0.1,1.0,1,a\n", 2),
        ] {
            match read_dataset(body.as_bytes()).unwrap_err() {
                HazriskError::Csv { line: l, .. } => assert_eq!(l, line, "{body}"),
                other => panic!("{other}"),
            }
        }
    }
}
