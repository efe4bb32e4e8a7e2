//! Target distributions: unnormalized log-densities with analytic gradients.
//!
//! A [`TargetModel`] is a cheap, clonable handle around any [`LogDensity`]
//! implementation plus optional reference moments. The four benchmark
//! families live in submodules; user code can plug in its own density by
//! implementing [`LogDensity`] and calling [`TargetModel::new`].

mod banana;
mod gaussian;
mod item_response;
mod logistic;
mod mixture;

use std::fmt;
use std::sync::Arc;

pub use banana::{make_banana, Banana};
pub use gaussian::{make_ill_conditioned_gaussian, DiagonalGaussian};
pub use item_response::{generate_item_response, ItemResponse, ItemResponseDataset};
pub use mixture::{make_bimodal_mixture, GaussianMixture1d};
pub use logistic::{
    load_logistic_csv, make_logistic_regression, synthetic_logistic_dataset, LogisticDataset,
    LogisticRegression,
};

/// An unnormalized log-density on `R^dim` with its gradient.
pub trait LogDensity: Send + Sync {
    fn dim(&self) -> usize;

    fn log_density(&self, x: &[f64]) -> f64;

    /// Writes `grad log p(x)` into `grad` and returns `log p(x)`.
    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

/// Shared, immutable handle to a target distribution.
#[derive(Clone)]
pub struct TargetModel {
    name: String,
    density: Arc<dyn LogDensity>,
    reference_mean: Option<Vec<f64>>,
    reference_variance: Option<Vec<f64>>,
}

impl fmt::Debug for TargetModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TargetModel")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("has_reference", &self.reference_mean.is_some())
            .finish()
    }
}

impl TargetModel {
    pub fn new(name: impl Into<String>, density: impl LogDensity + 'static) -> Self {
        TargetModel {
            name: name.into(),
            density: Arc::new(density),
            reference_mean: None,
            reference_variance: None,
        }
    }

    pub fn with_reference_moments(mut self, mean: Vec<f64>, variance: Vec<f64>) -> Self {
        assert_eq!(mean.len(), self.dim(), "reference mean has wrong dimension");
        assert_eq!(variance.len(), self.dim(), "reference variance has wrong dimension");
        self.reference_mean = Some(mean);
        self.reference_variance = Some(variance);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.density.dim()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        self.density.log_density(x)
    }

    pub fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.density.log_density_and_grad(x, grad)
    }

    pub fn grad_log_density(&self, x: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; self.dim()];
        self.density.log_density_and_grad(x, &mut grad);
        grad
    }

    pub fn reference_mean(&self) -> Option<&[f64]> {
        self.reference_mean.as_deref()
    }

    pub fn reference_variance(&self) -> Option<&[f64]> {
        self.reference_variance.as_deref()
    }
}

/// Largest discrepancy between the analytic gradient at `x` and central
/// finite differences (step `1e-5 max(1, |x_i|)`), relative to
/// `max(1, ||grad||_inf)`.
pub fn gradient_check(target: &TargetModel, x: &[f64]) -> f64 {
    let grad = target.grad_log_density(x);
    let scale = grad.iter().fold(1.0f64, |a, g| a.max(g.abs()));
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let h = 1e-5 * x[i].abs().max(1.0);
        probe[i] = x[i] + h;
        let up = target.log_density(&probe);
        probe[i] = x[i] - h;
        let down = target.log_density(&probe);
        probe[i] = x[i];
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((fd - grad[i]).abs() / scale);
    }
    worst
}

/// Directional form of [`gradient_check`] for densities too expensive to
/// difference coordinate by coordinate: compares `grad . u` with a central
/// difference along each direction `u` (normalized here), relative to
/// `max(1, ||grad||_2)`.
pub fn directional_gradient_check(target: &TargetModel, x: &[f64], directions: &[Vec<f64>]) -> f64 {
    let grad = target.grad_log_density(x);
    let scale = grad.iter().map(|g| g * g).sum::<f64>().sqrt().max(1.0);
    let h = 1e-5 * x.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let mut worst = 0.0f64;
    for u in directions {
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            continue;
        }
        let shifted = |sign: f64| -> Vec<f64> { x.iter().zip(u).map(|(a, b)| a + sign * h * b / norm).collect() };
        let fd = (target.log_density(&shifted(1.0)) - target.log_density(&shifted(-1.0))) / (2.0 * h);
        let analytic: f64 = grad.iter().zip(u).map(|(g, b)| g * b / norm).sum();
        worst = worst.max((fd - analytic).abs() / scale);
    }
    worst
}

/// `log N(x | mean, variance)` for a scalar.
pub(crate) fn normal_log_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let r = x - mean;
    -0.5 * (2.0 * std::f64::consts::PI * variance).ln() - 0.5 * r * r / variance
}

/// `log sigmoid(z)`, stable for large `|z|`.
pub(crate) fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
