use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counts with rows indexing the predicted class and columns the true class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawConfusion")]
pub struct ConfusionMatrix {
    class_names: Vec<String>,
    counts: Vec<Vec<u64>>,
}

#[derive(Deserialize)]
struct RawConfusion {
    class_names: Vec<String>,
    counts: Vec<Vec<u64>>,
}

impl TryFrom<RawConfusion> for ConfusionMatrix {
    type Error = Error;
    fn try_from(r: RawConfusion) -> Result<Self> {
        ConfusionMatrix::new(r.class_names, r.counts)
    }
}

impl ConfusionMatrix {
    pub fn new(class_names: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = class_names.len();
        if k == 0 {
            return Err(Error::Validation("confusion matrix needs at least one class".into()));
        }
        if counts.len() != k || counts.iter().any(|r| r.len() != k) {
            return Err(Error::Validation(format!("confusion matrix must be {k}x{k}")));
        }
        if counts.iter().flatten().sum::<u64>() == 0 {
            return Err(Error::Validation("confusion matrix is empty".into()));
        }
        Ok(ConfusionMatrix { class_names, counts })
    }

    /// Class names default to `C1..CK`.
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let names = (1..=counts.len()).map(|i| format!("C{i}")).collect();
        ConfusionMatrix::new(names, counts)
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn get(&self, predicted: usize, truth: usize) -> u64 {
        self.counts[predicted][truth]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    /// True-class frequencies.
    pub fn column_sums(&self) -> Vec<u64> {
        (0..self.n_classes())
            .map(|j| self.counts.iter().map(|r| r[j]).sum())
            .collect()
    }

    /// Observed agreement p₀.
    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }

    /// Every count multiplied by `factor`.
    pub fn scaled(&self, factor: u64) -> Result<Self> {
        let counts = self
            .counts
            .iter()
            .map(|r| r.iter().map(|c| c * factor).collect())
            .collect();
        ConfusionMatrix::new(self.class_names.clone(), counts)
    }

    /// Header row `predicted,<names...>`, then one row per predicted class.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Corrupt(format!("csv write failed: {e}"));
        let mut header = vec!["predicted".to_string()];
        header.extend(self.class_names.iter().cloned());
        w.write_record(&header).map_err(io)?;
        for (name, row) in self.class_names.iter().zip(&self.counts) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(u64::to_string));
            w.write_record(&rec).map_err(io)?;
        }
        w.flush()
            .map_err(|e| Error::Corrupt(format!("csv flush failed: {e}")))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r
            .headers()
            .map_err(|e| Error::Schema(format!("confusion csv header: {e}")))?
            .clone();
        let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut counts = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let row = i + 1;
            let rec = rec.map_err(|e| Error::Parse {
                row,
                column: String::new(),
                message: e.to_string(),
            })?;
            if rec.get(0) != names.get(i).map(String::as_str) {
                return Err(Error::Schema(format!(
                    "row {row} is labelled {:?}, expected {:?}",
                    rec.get(0).unwrap_or(""),
                    names.get(i)
                )));
            }
            let values = rec
                .iter()
                .skip(1)
                .zip(&names)
                .map(|(cell, col)| {
                    cell.trim().parse::<u64>().map_err(|_| Error::Parse {
                        row,
                        column: col.clone(),
                        message: format!("`{cell}` is not a nonnegative integer"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            counts.push(values);
        }
        ConfusionMatrix::new(names, counts)
    }
}

/// Tallies predicted against true class indices.
pub fn confusion(preds: &[usize], truth: &[usize], class_names: &[String]) -> Result<ConfusionMatrix> {
    if preds.len() != truth.len() {
        return Err(Error::Validation(format!(
            "{} predictions for {} labels",
            preds.len(),
            truth.len()
        )));
    }
    let k = class_names.len();
    let mut counts = vec![vec![0u64; k]; k];
    for (&p, &t) in preds.iter().zip(truth) {
        if p >= k || t >= k {
            return Err(Error::Validation(format!("class index {} out of range", p.max(t))));
        }
        counts[p][t] += 1;
    }
    ConfusionMatrix::new(class_names.to_vec(), counts)
}
