use std::path::Path;

use crate::error::{Error, Result};

/// Labeled feature rows. Column layout is `id, <feature names...>, label`
/// when stored as CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn new(
        ids: Vec<String>,
        feature_names: Vec<String>,
        rows: Vec<Vec<f64>>,
        labels: Vec<u8>,
    ) -> Result<Self> {
        let d = Self {
            ids,
            feature_names,
            rows,
            labels,
        };
        d.validate()?;
        Ok(d)
    }

    /// Names features `f0, f1, ...` and ids `0, 1, ...`.
    pub fn from_rows(rows: Vec<Vec<f64>>, labels: Vec<u8>) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        Self::new(
            (0..rows.len()).map(|i| i.to_string()).collect(),
            (0..width).map(|j| format!("f{j}")).collect(),
            rows,
            labels,
        )
    }

    fn validate(&self) -> Result<()> {
        let n = self.rows.len();
        if self.labels.len() != n || self.ids.len() != n {
            return Err(Error::LengthMismatch {
                left: n,
                right: self.labels.len().min(self.ids.len()),
            });
        }
        let w = self.width();
        for (row, r) in self.rows.iter().enumerate() {
            if r.len() != w {
                return Err(Error::Dimension {
                    expected: w,
                    found: r.len(),
                });
            }
            if let Some(col) = r.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row, col });
            }
        }
        if let Some(row) = self.labels.iter().position(|&l| l > 1) {
            return Err(Error::BadLabel {
                row,
                label: self.labels[row] as i64,
            });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> usize {
        self.feature_names.len()
    }

    /// `(n_negative, n_positive)` over `indices`.
    pub fn class_counts(&self, indices: &[usize]) -> (usize, usize) {
        let pos = indices.iter().filter(|&&i| self.labels[i] == 1).count();
        (indices.len() - pos, pos)
    }

    pub fn all_indices(&self) -> Vec<usize> {
        (0..self.len()).collect()
    }

    /// Copy with replacement labels, e.g. a permutation for leakage checks.
    pub fn with_labels(&self, labels: Vec<u8>) -> Result<Self> {
        Self::new(
            self.ids.clone(),
            self.feature_names.clone(),
            self.rows.clone(),
            labels,
        )
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file)
    }

    pub fn from_reader(reader: impl std::io::Read) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| Error::malformed("feature csv", e.to_string()))?
            .clone();
        let n_cols = header.len();
        if n_cols < 3 || &header[0] != "id" || &header[n_cols - 1] != "label" {
            return Err(Error::malformed(
                "feature csv",
                "header must be `id,<features...>,label`",
            ));
        }
        let feature_names: Vec<String> = header.iter().skip(1).take(n_cols - 2).map(String::from).collect();

        let mut ids = Vec::new();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::malformed("feature csv", e.to_string()))?;
            ids.push(rec[0].to_string());
            let values = (1..n_cols - 1)
                .map(|c| {
                    rec[c].trim().parse::<f64>().map_err(|_| {
                        Error::malformed("feature csv", format!("row {row} column {c}: `{}`", &rec[c]))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(values);
            let raw = rec[n_cols - 1].trim();
            let label = match raw {
                "0" => 0,
                "1" => 1,
                _ => {
                    return Err(Error::malformed(
                        "feature csv",
                        format!("row {row} label `{raw}` is not 0 or 1"),
                    ))
                }
            };
            labels.push(label);
        }
        Self::new(ids, feature_names, rows, labels)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.to_writer(file)
    }

    pub fn to_writer(&self, writer: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let csv_err = |e: csv::Error| Error::malformed("feature csv", e.to_string());
        let mut header = vec!["id".to_string()];
        header.extend(self.feature_names.iter().cloned());
        header.push("label".into());
        w.write_record(&header).map_err(csv_err)?;
        for i in 0..self.len() {
            let mut rec = vec![self.ids[i].clone()];
            rec.extend(self.rows[i].iter().map(|v| v.to_string()));
            rec.push(self.labels[i].to_string());
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::malformed("feature csv", e.to_string()))?;
        Ok(())
    }
}
