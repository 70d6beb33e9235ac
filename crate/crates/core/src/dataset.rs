//! Classification CSV loading for dataset-driven bandits.
//!
//! Format: UTF-8, comma separated, one header row, every column but the last
//! numeric, last column an integer class label in `[0, K)` where `K` is the
//! number of distinct labels. Row and column numbers in errors are 1-based
//! and count data rows only (the header is not row 1).

use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    /// `n × p`, standardized per column.
    pub features: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub column_means: Vec<f64>,
    /// Zero-variance columns report 0 here and are left centered at 0.
    pub column_sds: Vec<f64>,
}

impl Dataset {
    pub fn rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.features.row(i).transpose()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.classes];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    /// One-vs-rest ridge classifier: `w_k = (XᵀX + λI)⁻¹ Xᵀ 1{y = k}`.
    pub fn class_ridge(&self, reg: f64) -> Result<Vec<DVector<f64>>> {
        if !(reg > 0.0) {
            return Err(Error::invalid(format!("ridge penalty must be positive, got {reg}")));
        }
        let x = &self.features;
        let p = x.ncols();
        let gram = x.transpose() * x + DMatrix::identity(p, p) * reg;
        let chol = gram
            .cholesky()
            .ok_or_else(|| Error::Numeric("ridge Gram matrix is not positive definite".into()))?;
        Ok((0..self.classes)
            .map(|k| {
                let y = DVector::from_iterator(self.rows(), self.labels.iter().map(|&l| (l == k) as u8 as f64));
                chol.solve(&(x.transpose() * y))
            })
            .collect())
    }

    /// Fraction of rows whose highest-scoring class is the label (lowest class on ties).
    pub fn accuracy(&self, weights: &[DVector<f64>]) -> f64 {
        let hits = (0..self.rows())
            .filter(|&i| {
                let x = self.row(i);
                let mut best = 0;
                let mut best_s = f64::NEG_INFINITY;
                for (k, w) in weights.iter().enumerate() {
                    let s = x.dot(w);
                    if s > best_s {
                        best = k;
                        best_s = s;
                    }
                }
                best == self.labels[i]
            })
            .count();
        hits as f64 / self.rows() as f64
    }
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(file)
}

pub fn parse_dataset_str(text: &str) -> Result<Dataset> {
    parse_dataset(text.as_bytes())
}

pub fn parse_dataset<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse { row: 0, column: 0, message: format!("unreadable header: {e}") })?
        .clone();
    let width = header.len();
    if width < 2 {
        return Err(Error::InvalidDataset(format!(
            "need at least one feature column and a label column, header has {width}"
        )));
    }
    let p = width - 1;
    let mut values: Vec<f64> = Vec::new();
    let mut raw_labels: Vec<i64> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Parse { row, column: 0, message: e.to_string() })?;
        if rec.len() != width {
            return Err(Error::Parse {
                row,
                column: rec.len().min(width) + 1,
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        for j in 0..p {
            let field = &rec[j];
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                row,
                column: j + 1,
                message: format!("non-numeric feature {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse { row, column: j + 1, message: format!("non-finite feature {field:?}") });
            }
            values.push(v);
        }
        let field = &rec[p];
        let label: i64 = field.parse().map_err(|_| Error::Parse {
            row,
            column: width,
            message: format!("label {field:?} is not an integer"),
        })?;
        raw_labels.push(label);
    }
    let n = raw_labels.len();
    if n == 0 {
        return Err(Error::InvalidDataset("no data rows".into()));
    }
    let mut distinct = raw_labels.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let k = distinct.len();
    if k < 2 {
        return Err(Error::InvalidDataset(format!("need at least 2 classes, found {k}")));
    }
    let mut labels = Vec::with_capacity(n);
    for (i, &l) in raw_labels.iter().enumerate() {
        if l < 0 || l as usize >= k {
            return Err(Error::Parse {
                row: i + 1,
                column: width,
                message: format!("label {l} outside [0, {k})"),
            });
        }
        labels.push(l as usize);
    }

    let mut features = DMatrix::from_row_slice(n, p, &values);
    let mut means = Vec::with_capacity(p);
    let mut sds = Vec::with_capacity(p);
    for j in 0..p {
        let mut col = features.column_mut(j);
        let mean = col.mean();
        col.add_scalar_mut(-mean);
        let sd = (col.norm_squared() / n as f64).sqrt();
        if !(mean.is_finite() && sd.is_finite()) {
            return Err(Error::InvalidDataset(format!("feature column {} overflows when standardized", j + 1)));
        }
        if sd > 0.0 {
            col /= sd;
        }
        means.push(mean);
        sds.push(sd);
    }

    Ok(Dataset {
        feature_names: header.iter().take(p).map(str::to_string).collect(),
        features,
        labels,
        classes: k,
        column_means: means,
        column_sds: sds,
    })
}
