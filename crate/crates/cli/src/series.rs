//! Observation series input.

use std::path::Path;

use crate::error::{CliError, CliResult};

/// Observations `y_1..y_T` at unit-spaced times `1..T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSeries {
    pub values: Vec<Vec<f64>>,
}

impl ObservationSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }
}

/// Read a CSV with header `t,y1[,y2,...]` and rows at `t = 1, 2, ...`.
pub fn load_series(path: &Path) -> CliResult<ObservationSeries> {
    let text = std::fs::read_to_string(path).map_err(|e| parse_error(path, format!("cannot read file: {e}")))?;
    parse_series(&text).map_err(|message| parse_error(path, message))
}

fn parse_error(path: &Path, message: String) -> CliError {
    CliError::Parse {
        path: path.display().to_string(),
        message,
    }
}

/// Parse series text; errors carry 1-based line numbers.
pub fn parse_series(text: &str) -> Result<ObservationSeries, String> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| format!("line 1: {e}"))?.clone();
    if header.len() < 2 || &header[0] != "t" {
        return Err("line 1: header must be `t,y1[,y2,...]`".into());
    }
    let d = header.len() - 1;
    let mut values = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let line = record
            .as_ref()
            .ok()
            .and_then(|r| r.position())
            .map_or(k as u64 + 2, |p| p.line());
        let record = record.map_err(|e| format!("line {line}: {e}"))?;
        if record.len() != d + 1 {
            return Err(format!("line {line}: expected {} fields, found {}", d + 1, record.len()));
        }
        let t: i64 = record[0]
            .parse()
            .map_err(|_| format!("line {line}: time `{}` is not an integer", &record[0]))?;
        let expect = values.len() as i64 + 1;
        if t != expect {
            return Err(format!(
                "line {line}: unsupported format: times must run 1, 2, 3, ... (expected {expect}, found {t})"
            ));
        }
        let y = (1..=d)
            .map(|j| {
                let v: f64 = record[j]
                    .parse()
                    .map_err(|_| format!("line {line}: `{}` is not a number", &record[j]))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(format!("line {line}: non-finite value `{}`", &record[j]))
                }
            })
            .collect::<Result<Vec<f64>, String>>()?;
        values.push(y);
    }
    if values.is_empty() {
        return Err("empty series".into());
    }
    Ok(ObservationSeries { values })
}
