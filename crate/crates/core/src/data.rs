//! Dataset representation, standardization, train/test splitting and CSV I/O.
//!
//! A [`Dataset`] is immutable once built: every constructor validates shape
//! and finiteness, so downstream solvers can rely on those invariants.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Design matrix and response, with column names carried for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    feature_names: Vec<String>,
    response_name: String,
}

impl Dataset {
    /// Build a dataset with generated column names `x0, x1, ...` and response `y`.
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let names = (0..x.ncols()).map(|j| format!("x{j}")).collect();
        Self::with_names(x, y, names, "y".to_string())
    }

    pub fn with_names(
        x: DMatrix<f64>,
        y: DVector<f64>,
        feature_names: Vec<String>,
        response_name: String,
    ) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::Degenerate(format!(
                "dataset must have at least one row and one column, got {}x{}",
                x.nrows(),
                x.ncols()
            )));
        }
        if y.len() != x.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "response has length {} but design has {} rows",
                y.len(),
                x.nrows()
            )));
        }
        if feature_names.len() != x.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                x.ncols()
            )));
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("design matrix"));
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("response"));
        }
        Ok(Dataset {
            x,
            y,
            feature_names,
            response_name,
        })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn response_name(&self) -> &str {
        &self.response_name
    }

    /// Rows `indices` (repetition allowed) as a new dataset.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Dataset> {
        if indices.is_empty() {
            return Err(Error::Degenerate("empty row selection".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n()) {
            return Err(Error::DimensionMismatch(format!(
                "row index {bad} out of range for n = {}",
                self.n()
            )));
        }
        let x = DMatrix::from_fn(indices.len(), self.p(), |k, j| self.x[(indices[k], j)]);
        let y = DVector::from_fn(indices.len(), |k, _| self.y[indices[k]]);
        Ok(Dataset {
            x,
            y,
            feature_names: self.feature_names.clone(),
            response_name: self.response_name.clone(),
        })
    }

    /// Multiply row `k` of both X and y by `scale[k]`.
    pub fn scale_rows(&self, scale: &[f64]) -> Result<Dataset> {
        if scale.len() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "{} row scales for {} rows",
                scale.len(),
                self.n()
            )));
        }
        let mut x = self.x.clone();
        for (mut row, &s) in x.row_iter_mut().zip(scale) {
            row *= s;
        }
        let y = DVector::from_fn(self.n(), |i, _| self.y[i] * scale[i]);
        Dataset::with_names(x, y, self.feature_names.clone(), self.response_name.clone())
    }
}

/// Which CSV column holds the response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResponseColumn {
    Name(String),
    Index(usize),
}

impl From<&str> for ResponseColumn {
    /// Plain integers are read as a zero-based index, anything else as a name.
    fn from(s: &str) -> Self {
        match s.parse::<usize>() {
            Ok(i) => ResponseColumn::Index(i),
            Err(_) => ResponseColumn::Name(s.to_string()),
        }
    }
}

/// Read a numeric CSV with a header row.
///
/// The response column is extracted into `y`, `drop_columns` are discarded and
/// every remaining column becomes a predictor. Constant predictors are rejected.
pub fn load_csv(
    path: impl AsRef<Path>,
    response: &ResponseColumn,
    drop_columns: &[String],
) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();

    for name in drop_columns {
        if !headers.contains(name) {
            return Err(Error::MissingColumn(name.clone()));
        }
    }
    let response_idx = match response {
        ResponseColumn::Name(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.clone()))?,
        ResponseColumn::Index(i) if *i < headers.len() => *i,
        ResponseColumn::Index(i) => return Err(Error::MissingColumn(format!("#{i}"))),
    };
    if drop_columns.contains(&headers[response_idx]) {
        return Err(Error::InvalidArgument(format!(
            "response column '{}' is also listed for dropping",
            headers[response_idx]
        )));
    }
    let feature_idx: Vec<usize> = (0..headers.len())
        .filter(|&j| j != response_idx && !drop_columns.contains(&headers[j]))
        .collect();
    if feature_idx.is_empty() {
        return Err(Error::Degenerate("no predictor columns left".into()));
    }

    let mut values = Vec::new();
    let mut ys = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let parse = |j: usize| -> Result<f64> {
            let cell = record.get(j).unwrap_or("");
            cell.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::NonNumeric {
                    row: row + 1,
                    column: headers[j].clone(),
                    value: cell.to_string(),
                })
        };
        ys.push(parse(response_idx)?);
        for &j in &feature_idx {
            values.push(parse(j)?);
        }
    }
    if ys.is_empty() {
        return Err(Error::Degenerate(format!("{} has no data rows", path.display())));
    }

    let n = ys.len();
    let x = DMatrix::from_row_slice(n, feature_idx.len(), &values);
    let names: Vec<String> = feature_idx.iter().map(|&j| headers[j].clone()).collect();
    if n >= 2 {
        for (j, col) in x.column_iter().enumerate() {
            if col.iter().all(|&v| v == col[0]) {
                return Err(Error::ConstantColumn(names[j].clone()));
            }
        }
    }
    Dataset::with_names(x, DVector::from_vec(ys), names, headers[response_idx].clone())
}

/// Write the dataset as CSV: feature columns followed by the response column.
///
/// Values use Rust's shortest round-trip float formatting, so
/// [`load_csv`] recovers the exact bits.
pub fn write_csv(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::Writer::from_writer(BufWriter::new(file));
    let mut header: Vec<&str> = d.feature_names.iter().map(String::as_str).collect();
    header.push(&d.response_name);
    writer.write_record(&header)?;
    let mut record = Vec::with_capacity(d.p() + 1);
    for i in 0..d.n() {
        record.clear();
        record.extend((0..d.p()).map(|j| d.x[(i, j)].to_string()));
        record.push(d.y[i].to_string());
        writer.write_record(&record)?;
    }
    writer
        .into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?
        .flush()
        .map_err(|e| Error::io(path, e))
}

/// Column means and sample standard deviations (denominator n - 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub column_means: Vec<f64>,
    pub column_scales: Vec<f64>,
}

impl StandardizationStats {
    pub fn compute(d: &Dataset) -> Result<Self> {
        let n = d.n();
        if n < 2 {
            return Err(Error::Degenerate(
                "standardization needs at least two rows".into(),
            ));
        }
        let mut means = Vec::with_capacity(d.p());
        let mut scales = Vec::with_capacity(d.p());
        for (j, col) in d.x.column_iter().enumerate() {
            let mean = col.sum() / n as f64;
            let ss: f64 = col.iter().map(|v| (v - mean).powi(2)).sum();
            let sd = (ss / (n - 1) as f64).sqrt();
            if sd <= 1e-12 * (1.0 + mean.abs()) {
                return Err(Error::ConstantColumn(d.feature_names[j].clone()));
            }
            means.push(mean);
            scales.push(sd);
        }
        Ok(StandardizationStats {
            column_means: means,
            column_scales: scales,
        })
    }

    /// Apply the stored transform to `d` (e.g. a held-out test set).
    pub fn apply(&self, d: &Dataset) -> Result<Dataset> {
        if d.p() != self.column_means.len() {
            return Err(Error::DimensionMismatch(format!(
                "stats for {} columns applied to {} columns",
                self.column_means.len(),
                d.p()
            )));
        }
        let mut x = d.x.clone();
        for (j, mut col) in x.column_iter_mut().enumerate() {
            let (m, s) = (self.column_means[j], self.column_scales[j]);
            col.apply(|v| *v = (*v - m) / s);
        }
        Dataset::with_names(x, d.y.clone(), d.feature_names.clone(), d.response_name.clone())
    }
}

/// Center every column and scale it to unit sample standard deviation. `y` is left raw.
pub fn standardize(d: &Dataset) -> Result<(Dataset, StandardizationStats)> {
    let stats = StandardizationStats::compute(d)?;
    let out = stats.apply(d)?;
    Ok((out, stats))
}

/// Disjoint train/test partition of `0..n`, both sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

pub fn split(d: &Dataset, train_fraction: f64, seed: u64) -> Result<Split> {
    split_indices(d.n(), train_fraction, seed)
}

/// Seeded random split with `round(train_fraction * n)` training rows.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<Split> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n_train = (train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::Degenerate(format!(
            "train fraction {train_fraction} on {n} rows leaves an empty partition"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng_from_seed(seed));
    let mut train_indices = perm[..n_train].to_vec();
    let mut test_indices = perm[n_train..].to_vec();
    train_indices.sort_unstable();
    test_indices.sort_unstable();
    Ok(Split {
        train_indices,
        test_indices,
    })
}
