//! CSV ingestion of a two-way layout.
//!
//! The grid is rectangular and numeric. A header row and a label column
//! are optional and detected by non-numeric content: the first column is a
//! label column when any row after the first has a non-numeric first
//! field, and the first row is a header when any of its remaining fields is
//! non-numeric.

use crate::error::{AdditivityError, Result};
use crate::tabular::DataMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Detect {
    Auto,
    Never,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsvOptions {
    pub delimiter: u8,
    pub header: Detect,
    pub labels: Detect,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            delimiter: b',',
            header: Detect::Auto,
            labels: Detect::Auto,
        }
    }
}

fn is_numeric(field: &str) -> bool {
    field.parse::<f64>().is_ok_and(f64::is_finite)
}

pub fn parse_csv(text: &str, options: &CsvOptions) -> Result<DataMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(options.delimiter)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());

    let mut records: Vec<(usize, Vec<String>)> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            AdditivityError::Parse {
                line,
                column: 0,
                message: e.to_string(),
            }
        })?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let line = rec
            .position()
            .map_or(records.len() + 1, |p| p.line() as usize);
        records.push((line, rec.iter().map(str::to_owned).collect()));
    }
    if records.is_empty() {
        return Err(AdditivityError::Parse {
            line: 1,
            column: 1,
            message: "no data".into(),
        });
    }

    let has_labels = options.labels == Detect::Auto
        && records
            .iter()
            .skip(1)
            .any(|(_, r)| r.first().is_some_and(|f| !is_numeric(f)));
    let first_data_col = usize::from(has_labels);
    let has_header = options.header == Detect::Auto
        && records[0]
            .1
            .iter()
            .skip(first_data_col)
            .any(|f| !is_numeric(f));

    let body = &records[usize::from(has_header)..];
    if body.is_empty() {
        return Err(AdditivityError::Parse {
            line: records[0].0,
            column: 1,
            message: "header row without data".into(),
        });
    }
    let width = body[0].1.len();
    let mut rows = Vec::with_capacity(body.len());
    let mut row_labels = Vec::new();
    for (line, rec) in body {
        if rec.len() != width {
            return Err(AdditivityError::Parse {
                line: *line,
                column: rec.len().min(width) + 1,
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        if has_labels {
            row_labels.push(rec[0].clone());
        }
        let row = rec[first_data_col..]
            .iter()
            .enumerate()
            .map(|(c, f)| {
                f.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| AdditivityError::Parse {
                        line: *line,
                        column: c + first_data_col + 1,
                        message: format!("'{f}' is not a finite number"),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let col_labels = has_header.then(|| records[0].1[first_data_col..].to_vec());
    if let Some(labels) = &col_labels {
        if labels.len() != width - first_data_col {
            return Err(AdditivityError::Parse {
                line: records[0].0,
                column: 1,
                message: format!(
                    "header has {} fields, data rows have {}",
                    labels.len() + first_data_col,
                    width
                ),
            });
        }
    }
    DataMatrix::from_rows(&rows)?.with_labels(has_labels.then_some(row_labels), col_labels)
}
