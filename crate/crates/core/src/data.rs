//! Synthetic datasets and CSV interchange.
//!
//! CSV layout: a header `x1,...,xd,label` (classification) or
//! `x1,...,xd,target` (regression), then one row per sample. Floats are
//! written in Rust's shortest round-trip decimal form, so a save/load cycle
//! is lossless. Lines end in `\n`.

use std::path::Path;

use thiserror::Error;

use crate::rng::Rng;
use crate::tensor::{Matrix, Targets, Task};

/// Label threshold for the two-feature classification task: `x1 + x2 > 1`.
pub const CLASSIFICATION_THRESHOLD: f64 = 1.0;

/// Regression demo target: `3.0 + 1.5 * x1 + N(0, 0.05)`.
pub const VOLTAGE_INTERCEPT: f64 = 3.0;
pub const VOLTAGE_SLOPE: f64 = 1.5;
pub const VOLTAGE_NOISE_SD: f64 = 0.05;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{0}")]
    Domain(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Schema { line: u64, message: String },
    #[error("line {line}, column {column}: cannot parse {text:?} as a number")]
    Parse {
        line: u64,
        column: usize,
        text: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Targets,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Targets) -> Result<Self, DataError> {
        if features.rows() != labels.len() {
            return Err(DataError::Domain(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        Ok(Dataset { features, labels })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn task(&self) -> Task {
        self.labels.task()
    }

    /// Largest class label plus one; 0 for regression or an empty set.
    pub fn class_count(&self) -> usize {
        match &self.labels {
            Targets::Classes(c) => c.iter().max().map_or(0, |m| m + 1),
            Targets::Values(_) => 0,
        }
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(indices),
            labels: self.labels.select(indices),
        }
    }

    /// Splits off the last `round(fraction * len)` rows as a validation set.
    pub fn split_tail(&self, fraction: f64) -> (Dataset, Dataset) {
        let n = self.len();
        let val = ((n as f64) * fraction).round() as usize;
        let cut = n - val.min(n);
        let head: Vec<usize> = (0..cut).collect();
        let tail: Vec<usize> = (cut..n).collect();
        (self.select(&head), self.select(&tail))
    }
}

fn check_n(n: usize) -> Result<(), DataError> {
    if n == 0 {
        return Err(DataError::Domain("sample count must be positive".into()));
    }
    Ok(())
}

/// `n` rows of `x1, x2 ~ U[0, 1)` labelled `1` iff `x1 + x2 > 1`.
///
/// Draw order per row: `x1`, then `x2`.
pub fn generate_classification(n: usize, seed: u64) -> Result<Dataset, DataError> {
    check_n(n)?;
    let mut rng = Rng::new(seed);
    let mut features = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x1 = rng.uniform();
        let x2 = rng.uniform();
        features.extend([x1, x2]);
        labels.push(classification_label(x1, x2));
    }
    Dataset::new(
        Matrix::from_vec(n, 2, features).expect("sized above"),
        Targets::Classes(labels),
    )
}

pub fn classification_label(x1: f64, x2: f64) -> usize {
    usize::from(x1 + x2 > CLASSIFICATION_THRESHOLD)
}

pub fn voltage_target(x1: f64, noise: f64) -> f64 {
    VOLTAGE_INTERCEPT + VOLTAGE_SLOPE * x1 + noise
}

/// `n` rows of `x1, x2 ~ U[0, 1)` with target `3.0 + 1.5 x1 + N(0, 0.05)`.
///
/// Draw order per row: `x1`, `x2`, then one Box–Muller normal (two uniforms).
pub fn generate_regression_demo(n: usize, seed: u64) -> Result<Dataset, DataError> {
    check_n(n)?;
    let mut rng = Rng::new(seed);
    let mut features = Vec::with_capacity(2 * n);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let x1 = rng.uniform();
        let x2 = rng.uniform();
        let noise = VOLTAGE_NOISE_SD * rng.standard_normal();
        features.extend([x1, x2]);
        targets.push(voltage_target(x1, noise));
    }
    Dataset::new(
        Matrix::from_vec(n, 2, features).expect("sized above"),
        Targets::Values(targets),
    )
}

fn header(feature_dim: usize, task: Task) -> Vec<String> {
    let mut h: Vec<String> = (1..=feature_dim).map(|i| format!("x{i}")).collect();
    h.push(
        match task {
            Task::Classification => "label",
            Task::Regression => "target",
        }
        .to_owned(),
    );
    h
}

pub fn to_csv_string(ds: &Dataset) -> String {
    let mut out = header(ds.feature_dim(), ds.task()).join(",");
    out.push('\n');
    for (i, row) in ds.features.iter_rows().enumerate() {
        for x in row {
            out.push_str(&x.to_string());
            out.push(',');
        }
        match &ds.labels {
            Targets::Classes(c) => out.push_str(&c[i].to_string()),
            Targets::Values(v) => out.push_str(&v[i].to_string()),
        }
        out.push('\n');
    }
    out
}

pub fn save_csv(ds: &Dataset, path: &Path) -> Result<(), DataError> {
    std::fs::write(path, to_csv_string(ds)).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_csv(path: &Path) -> Result<Dataset, DataError> {
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_csv(&text)
}

/// Parses CSV text; line numbers in errors count the header as line 1.
pub fn parse_csv(text: &str) -> Result<Dataset, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let head = match records.next() {
        Some(r) => r.map_err(|e| csv_error(&e))?,
        None => {
            return Err(DataError::Schema {
                line: 1,
                message: "missing header".into(),
            })
        }
    };
    let cols: Vec<&str> = head.iter().collect();
    let (task, feature_dim) = match cols.split_last() {
        Some((&"label", feats)) => (Task::Classification, feats.len()),
        Some((&"target", feats)) => (Task::Regression, feats.len()),
        _ => {
            return Err(DataError::Schema {
                line: 1,
                message: format!(
                    "header must end in `label` or `target`, got {:?}",
                    head.as_slice()
                ),
            })
        }
    };
    if cols != header(feature_dim, task) || feature_dim == 0 {
        return Err(DataError::Schema {
            line: 1,
            message: format!(
                "expected header `{}`",
                header(feature_dim.max(1), task).join(",")
            ),
        });
    }
    let mut features = Vec::new();
    let mut classes = Vec::new();
    let mut values = Vec::new();
    for record in records {
        let record = record.map_err(|e| csv_error(&e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != feature_dim + 1 {
            return Err(DataError::Schema {
                line,
                message: format!(
                    "expected {} columns, found {}",
                    feature_dim + 1,
                    record.len()
                ),
            });
        }
        for (column, cell) in record.iter().enumerate() {
            let bad = || DataError::Parse {
                line,
                column: column + 1,
                text: cell.to_owned(),
            };
            if column < feature_dim {
                let x: f64 = cell.trim().parse().map_err(|_| bad())?;
                if !x.is_finite() {
                    return Err(bad());
                }
                features.push(x);
            } else if task == Task::Classification {
                classes.push(cell.trim().parse::<usize>().map_err(|_| bad())?);
            } else {
                let y: f64 = cell.trim().parse().map_err(|_| bad())?;
                if !y.is_finite() {
                    return Err(bad());
                }
                values.push(y);
            }
        }
    }
    let rows = features.len() / feature_dim;
    let labels = match task {
        Task::Classification => Targets::Classes(classes),
        Task::Regression => Targets::Values(values),
    };
    Dataset::new(
        Matrix::from_vec(rows, feature_dim, features).expect("rows counted above"),
        labels,
    )
}

fn csv_error(e: &csv::Error) -> DataError {
    DataError::Schema {
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    }
}
