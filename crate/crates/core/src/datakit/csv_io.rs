//! CSV ingestion and export.
//!
//! Input is UTF-8, comma-separated, with a header row and `.` as decimal
//! point. Class names and categorical code books are sorted so that
//! independently ingested files agree on indices.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use crate::datakit::dataset::{column_range, Dataset, FeatureKind, FeatureMeta};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    Continuous,
    Categorical,
}

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    pub label_column: String,
    /// Per-column hints; unlisted columns are continuous.
    pub kinds: BTreeMap<String, ColumnKind>,
    /// Fixes the class order instead of sorting the observed labels.
    pub class_names: Option<Vec<String>>,
}

impl IngestOptions {
    pub fn new(label_column: impl Into<String>) -> Self {
        IngestOptions {
            label_column: label_column.into(),
            ..Default::default()
        }
    }

    pub fn categorical(mut self, column: impl Into<String>) -> Self {
        self.kinds.insert(column.into(), ColumnKind::Categorical);
        self
    }
}

pub fn ingest_csv(path: impl AsRef<Path>, opts: &IngestOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    read_csv(file, &name, opts)
}

pub fn read_csv(reader: impl Read, name: &str, opts: &IngestOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Schema(format!("cannot read header row: {e}")))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let label_idx = headers
        .iter()
        .position(|h| *h == opts.label_column)
        .ok_or_else(|| {
            Error::Schema(format!("label column `{}` not found", opts.label_column))
        })?;
    for hinted in opts.kinds.keys() {
        if !headers.contains(hinted) {
            return Err(Error::Schema(format!(
                "column `{hinted}` named in kind hints is not in the header"
            )));
        }
    }
    let feature_cols: Vec<usize> = (0..headers.len()).filter(|&c| c != label_idx).collect();
    let kinds: Vec<ColumnKind> = feature_cols
        .iter()
        .map(|&c| {
            opts.kinds
                .get(&headers[c])
                .copied()
                .unwrap_or(ColumnKind::Continuous)
        })
        .collect();

    let mut raw_labels = Vec::new();
    let mut raw_rows: Vec<Vec<String>> = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 1;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        if rec.len() != headers.len() {
            return Err(Error::Parse {
                row,
                column: String::new(),
                message: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
        }
        let label = rec[label_idx].trim();
        if label.is_empty() {
            return Err(Error::Parse {
                row,
                column: headers[label_idx].clone(),
                message: "missing label".into(),
            });
        }
        raw_labels.push(label.to_string());
        raw_rows.push(feature_cols.iter().map(|&c| rec[c].trim().to_string()).collect());
    }

    let class_names: Vec<String> = match &opts.class_names {
        Some(names) => names.clone(),
        None => raw_labels
            .iter()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    let class_index: BTreeMap<&str, usize> = class_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let labels = raw_labels
        .iter()
        .enumerate()
        .map(|(r, l)| {
            class_index.get(l.as_str()).copied().ok_or_else(|| Error::Parse {
                row: r + 1,
                column: headers[label_idx].clone(),
                message: format!("label `{l}` is not one of the declared classes"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if class_names.len() < 2 {
        return Err(Error::Validation(format!(
            "a dataset needs at least 2 classes, found {}",
            class_names.len()
        )));
    }

    let code_books: Vec<Option<Vec<String>>> = kinds
        .iter()
        .enumerate()
        .map(|(j, k)| match k {
            ColumnKind::Continuous => None,
            ColumnKind::Categorical => Some(
                raw_rows
                    .iter()
                    .map(|row| row[j].clone())
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect(),
            ),
        })
        .collect();

    let mut cases = Vec::with_capacity(raw_rows.len());
    for (r, row) in raw_rows.iter().enumerate() {
        let mut x = Vec::with_capacity(row.len());
        for (j, cell) in row.iter().enumerate() {
            let column = &headers[feature_cols[j]];
            if cell.is_empty() {
                return Err(Error::Parse {
                    row: r + 1,
                    column: column.clone(),
                    message: "missing value".into(),
                });
            }
            let v = match &code_books[j] {
                Some(codes) => codes.binary_search(cell).expect("code book built from data") as f64,
                None => {
                    let v: f64 = cell.parse().map_err(|_| Error::Parse {
                        row: r + 1,
                        column: column.clone(),
                        message: format!("`{cell}` is not a number"),
                    })?;
                    if !v.is_finite() {
                        return Err(Error::Parse {
                            row: r + 1,
                            column: column.clone(),
                            message: format!("`{cell}` is not finite"),
                        });
                    }
                    v
                }
            };
            x.push(v);
        }
        cases.push(x);
    }

    let features = feature_cols
        .iter()
        .enumerate()
        .map(|(j, &c)| match code_books[j].as_ref() {
            Some(codes) => FeatureMeta::categorical(headers[c].clone(), codes.clone()),
            None => {
                let (min, max) = column_range(&cases, j);
                FeatureMeta::continuous(headers[c].clone(), min, max)
            }
        })
        .collect();
    Dataset::new(name, class_names, features, cases, labels)
}

/// Writes the dataset back as CSV; the label column is written last.
pub fn write_csv(ds: &Dataset, label_column: &str, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let to_err = |e: csv::Error| Error::Corrupt(format!("csv write failed: {e}"));
    let mut header: Vec<&str> = ds.features.iter().map(|f| f.name.as_str()).collect();
    header.push(label_column);
    w.write_record(&header).map_err(to_err)?;
    for (x, &y) in ds.cases.iter().zip(&ds.labels) {
        let mut rec: Vec<String> = ds
            .features
            .iter()
            .zip(x)
            .map(|(f, &v)| match &f.kind {
                FeatureKind::Categorical { codes } => codes[v as usize].clone(),
                FeatureKind::Continuous { .. } => format!("{v:?}"),
            })
            .collect();
        rec.push(ds.class_names[y].clone());
        w.write_record(&rec).map_err(to_err)?;
    }
    w.flush()
        .map_err(|e| Error::Corrupt(format!("csv flush failed: {e}")))?;
    Ok(())
}
