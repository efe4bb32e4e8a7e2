//! Transition kernels built on orbits of deterministic maps.
//!
//! Every kernel step resamples what it needs from the caller's rng and
//! returns a [`StepOutput`] holding the weighted samples it emits and the
//! next chain state. Weights inside one step always sum to one.

mod config;
mod contracting;
mod diffusing;
mod escaping;
mod hmc;
mod linear_combination;
mod orbit;
mod periodic;
mod sampler;
mod snis;

pub use config::{DirectionUpdate, KernelConfig, KernelKind};
pub use contracting::{orbital_contracting_step, ContractingOptions, DEFAULT_MAX_EXTENSION, DEFAULT_THRESHOLD};
pub use diffusing::{diffusing_step, diffusing_tests, CChoice, DiffusingTests};
pub use escaping::{escaping_test, m_step_test};
pub use hmc::{hmc_step, hmc_step_with_proposal, recycled_hmc_step};
pub use linear_combination::linear_combination_step;
pub use orbit::Orbit;
pub use periodic::orbital_periodic_step;
pub use sampler::Sampler;
pub use snis::{deterministic_snis, stochastic_snis};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::dynamics::PhaseState;
use crate::targets::TargetModel;

/// A point emitted by a kernel together with its normalized weight.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample {
    pub x: Vec<f64>,
    pub weight: f64,
    pub iteration: u64,
    pub gradient_evals_so_far: u64,
}

impl WeightedSample {
    pub fn new(x: Vec<f64>, weight: f64) -> Self {
        WeightedSample {
            x,
            weight,
            iteration: 0,
            gradient_evals_so_far: 0,
        }
    }
}

/// Result of one kernel application.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub samples: Vec<WeightedSample>,
    pub next: PhaseState,
    /// Probability of leaving the current point (acceptance statistic).
    pub accept_prob: f64,
    /// Density evaluations not covered by a gradient evaluation.
    pub density_evals: u64,
    pub numerical_failure: bool,
    /// The orbit extension hit its hard cap.
    pub truncated: bool,
    /// Upper bound on the normalized weight discarded by truncation.
    pub tail_bound: f64,
}

impl StepOutput {
    /// Stay at `state`, emitting it with unit weight.
    pub(crate) fn stay(state: PhaseState, numerical_failure: bool) -> Self {
        StepOutput {
            samples: vec![WeightedSample::new(state.x().to_vec(), 1.0)],
            next: state,
            accept_prob: 0.0,
            density_evals: 0,
            numerical_failure,
            truncated: false,
            tail_bound: 0.0,
        }
    }
}

/// `log p(x) - |v|^2 / 2`, using the state's cached density when present.
/// Returns the value and whether a fresh density evaluation was needed.
pub fn joint_log_density(target: &TargetModel, s: &PhaseState) -> (f64, bool) {
    match s.cached_log_density() {
        Some(lp) => (lp - s.kinetic_energy(), false),
        None => (target.log_density(s.x()) - s.kinetic_energy(), true),
    }
}

pub(crate) fn resample_momentum<R: Rng + ?Sized>(s: &mut PhaseState, rng: &mut R) {
    for v in s.v.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}

/// Normalizes log-weights with log-sum-exp. `None` when no weight is
/// positive and finite.
pub fn normalize_log_weights(log_weights: &[f64]) -> Option<Vec<f64>> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let unnorm: Vec<f64> = log_weights
        .iter()
        .map(|lw| if lw.is_nan() { 0.0 } else { (lw - max).exp() })
        .collect();
    let total: f64 = unnorm.iter().sum();
    Some(unnorm.into_iter().map(|w| w / total).collect())
}

/// Index drawn with the given probabilities.
pub(crate) fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}
