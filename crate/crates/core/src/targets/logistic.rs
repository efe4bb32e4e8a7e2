use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{log_sigmoid, sigmoid, LogDensity, TargetModel};
use crate::error::{Error, Result};

/// Covariates (row-major) and binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticDataset {
    n_rows: usize,
    n_features: usize,
    covariates: Vec<f64>,
    labels: Vec<f64>,
}

impl LogisticDataset {
    pub fn new(n_rows: usize, n_features: usize, covariates: Vec<f64>, labels: Vec<f64>) -> Result<Self> {
        if n_rows == 0 || n_features == 0 {
            return Err(Error::invalid("logistic dataset needs at least one row and one feature"));
        }
        if covariates.len() != n_rows * n_features || labels.len() != n_rows {
            return Err(Error::invalid(format!(
                "shape mismatch: {} covariates and {} labels for {n_rows}x{n_features}",
                covariates.len(),
                labels.len()
            )));
        }
        if let Some(i) = labels.iter().position(|&y| y != 0.0 && y != 1.0) {
            return Err(Error::invalid(format!("label {} at row {i} is not binary", labels[i])));
        }
        Ok(LogisticDataset {
            n_rows,
            n_features,
            covariates,
            labels,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.covariates[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// Rescales every covariate column to zero mean and unit (population)
    /// variance. Constant columns are only centered.
    pub fn standardize(&mut self) {
        let n = self.n_rows as f64;
        for j in 0..self.n_features {
            let mean = (0..self.n_rows).map(|i| self.covariates[i * self.n_features + j]).sum::<f64>() / n;
            let var = (0..self.n_rows)
                .map(|i| (self.covariates[i * self.n_features + j] - mean).powi(2))
                .sum::<f64>()
                / n;
            let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
            for i in 0..self.n_rows {
                let c = &mut self.covariates[i * self.n_features + j];
                *c = (*c - mean) / scale;
            }
        }
    }
}

/// Bayesian logistic regression posterior. Parameters are laid out as
/// `[w_1, .., w_F, b]` and the success probability is `sigmoid(x.w - b)`.
#[derive(Debug, Clone)]
pub struct LogisticRegression {
    data: LogisticDataset,
}

impl LogisticRegression {
    fn logit(&self, theta: &[f64], i: usize) -> f64 {
        let f = self.data.n_features;
        let dot: f64 = self.data.row(i).iter().zip(&theta[..f]).map(|(a, b)| a * b).sum();
        dot - theta[f]
    }

    pub fn log_likelihood(&self, theta: &[f64]) -> f64 {
        (0..self.data.n_rows)
            .map(|i| {
                let z = self.logit(theta, i);
                if self.data.labels[i] == 1.0 {
                    log_sigmoid(z)
                } else {
                    log_sigmoid(-z)
                }
            })
            .sum()
    }
}

impl LogDensity for LogisticRegression {
    fn dim(&self) -> usize {
        self.data.n_features + 1
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        let prior: f64 = -0.5 * theta.iter().map(|t| t * t).sum::<f64>();
        prior + self.log_likelihood(theta)
    }

    fn log_density_and_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let f = self.data.n_features;
        for (g, t) in grad.iter_mut().zip(theta) {
            *g = -t;
        }
        let mut lp = -0.5 * theta.iter().map(|t| t * t).sum::<f64>();
        for i in 0..self.data.n_rows {
            let z = self.logit(theta, i);
            let y = self.data.labels[i];
            lp += if y == 1.0 { log_sigmoid(z) } else { log_sigmoid(-z) };
            let r = y - sigmoid(z);
            for (g, x) in grad[..f].iter_mut().zip(self.data.row(i)) {
                *g += r * x;
            }
            grad[f] -= r;
        }
        lp
    }
}

pub fn make_logistic_regression(data: LogisticDataset) -> Result<TargetModel> {
    if data.n_rows == 0 {
        return Err(Error::invalid("empty dataset"));
    }
    Ok(TargetModel::new("logistic_regression", LogisticRegression { data }))
}

/// Seeded stand-in with the shape of the German credit data: standardized
/// Gaussian covariates and labels drawn from a logistic model whose
/// parameters come from the prior.
pub fn synthetic_logistic_dataset(n_rows: usize, n_features: usize, seed: u64) -> Result<LogisticDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta: Vec<f64> = (0..=n_features).map(|_| rng.sample(StandardNormal)).collect();
    let covariates: Vec<f64> = (0..n_rows * n_features).map(|_| rng.sample(StandardNormal)).collect();
    let labels = (0..n_rows)
        .map(|i| {
            let row = &covariates[i * n_features..(i + 1) * n_features];
            let z: f64 = row.iter().zip(&theta).map(|(a, b)| a * b).sum::<f64>() - theta[n_features];
            if rng.random::<f64>() < sigmoid(z) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let mut data = LogisticDataset::new(n_rows, n_features, covariates, labels)?;
    data.standardize();
    Ok(data)
}

/// Reads a numeric CSV whose last column is a 0/1 label, then standardizes
/// the covariate columns. Reported rows and columns are 1-based file
/// positions.
pub fn load_logistic_csv(path: &Path, has_header: bool) -> Result<LogisticDataset> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_reader(file);

    let mut covariates = Vec::new();
    let mut labels = Vec::new();
    let mut width: Option<usize> = None;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let row = e.position().map_or(0, |p| p.line() as usize);
            Error::MalformedInput {
                row,
                column: 0,
                message: e.to_string(),
            }
        })?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        if record.len() < 2 {
            return Err(Error::MalformedInput {
                row,
                column: record.len(),
                message: "need at least one covariate and a label".into(),
            });
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::MalformedInput {
                    row,
                    column: record.len(),
                    message: format!("expected {w} columns, found {}", record.len()),
                })
            }
            _ => {}
        }
        let last = record.len() - 1;
        for (j, field) in record.iter().enumerate() {
            let value: f64 = field.parse().map_err(|_| Error::MalformedInput {
                row,
                column: j + 1,
                message: format!("not a number: {field:?}"),
            })?;
            if !value.is_finite() {
                return Err(Error::MalformedInput {
                    row,
                    column: j + 1,
                    message: "non-finite value".into(),
                });
            }
            if j == last {
                if value != 0.0 && value != 1.0 {
                    return Err(Error::MalformedInput {
                        row,
                        column: j + 1,
                        message: format!("label must be 0 or 1, found {field}"),
                    });
                }
                labels.push(value);
            } else {
                covariates.push(value);
            }
        }
    }
    let n_rows = labels.len();
    if n_rows == 0 {
        return Err(Error::MalformedInput {
            row: 0,
            column: 0,
            message: "no data rows".into(),
        });
    }
    let mut data = LogisticDataset::new(n_rows, width.unwrap_or(1) - 1, covariates, labels)?;
    data.standardize();
    Ok(data)
}
