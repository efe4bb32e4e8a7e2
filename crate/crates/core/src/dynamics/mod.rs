//! Invertible deterministic maps on phase space with tracked log-Jacobians.

mod hamiltonian;
mod periodic;
mod rotation;
mod weyl;

pub use hamiltonian::{conformal_leapfrog, leapfrog, HamiltonianMap};
pub use periodic::{periodic_wrap, PeriodicWrap};
pub use rotation::{exact_rotation, ExactRotation};
pub use weyl::{weyl_map, Continuous1d, Normal1d, WeylMap, SQRT2_FRACTION};

use crate::error::{Error, Result};

/// Cached `log p(x)` and `grad log p(x)` at a state's position.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct DensityCache {
    pub log_p: f64,
    pub grad: Vec<f64>,
}

/// A point `(x, v)` of phase space, optionally extended by a direction
/// index `d`, together with the log-Jacobian accumulated by the maps that
/// produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    x: Vec<f64>,
    pub v: Vec<f64>,
    pub d: Option<usize>,
    pub log_jac: f64,
    cache: Option<DensityCache>,
}

impl PhaseState {
    pub fn new(x: Vec<f64>, v: Vec<f64>) -> Self {
        PhaseState {
            x,
            v,
            d: None,
            log_jac: 0.0,
            cache: None,
        }
    }

    /// A state with no auxiliary momentum.
    pub fn position(x: Vec<f64>) -> Self {
        Self::new(x, Vec::new())
    }

    pub fn with_direction(mut self, d: usize) -> Self {
        self.d = Some(d);
        self
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn into_x(self) -> Vec<f64> {
        self.x
    }

    pub fn set_x(&mut self, x: Vec<f64>) {
        self.x = x;
        self.cache = None;
    }

    /// `log p(x)` if a map has already evaluated it at this position.
    pub fn cached_log_density(&self) -> Option<f64> {
        self.cache.as_ref().map(|c| c.log_p)
    }

    pub fn cached_gradient(&self) -> Option<&[f64]> {
        self.cache.as_ref().map(|c| c.grad.as_slice())
    }

    #[cfg(test)]
    pub(crate) fn with_cache(mut self, cache: DensityCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self.v.iter().map(|v| v * v).sum::<f64>()
    }

    /// Maximum absolute coordinate difference over `x`, `v` and `log_jac`.
    pub fn max_abs_diff(&self, other: &PhaseState) -> f64 {
        let dx = self.x.iter().zip(&other.x).map(|(a, b)| (a - b).abs());
        let dv = self.v.iter().zip(&other.v).map(|(a, b)| (a - b).abs());
        dx.chain(dv).fold(0.0, f64::max)
    }
}

/// An invertible map on (possibly extended) phase space.
///
/// `forward` returns a state whose `log_jac` is the input's plus
/// [`step_log_jac`](Self::step_log_jac) at the input; `inverse` subtracts
/// the step log-Jacobian evaluated at the pre-image, so a forward/inverse
/// round trip restores `log_jac`.
pub trait DeterministicMap: Send + Sync {
    fn forward(&self, s: &PhaseState) -> Result<PhaseState>;

    fn inverse(&self, s: &PhaseState) -> Result<PhaseState>;

    /// `log |df/ds|` at `s`.
    fn step_log_jac(&self, s: &PhaseState) -> f64;

    /// `log |df^-1/ds|` at `s`.
    fn inverse_step_log_jac(&self, s: &PhaseState) -> f64 {
        match self.inverse(s) {
            Ok(pre) => -self.step_log_jac(&pre),
            Err(_) => f64::NAN,
        }
    }

    /// Orbit period when every orbit is periodic by construction.
    fn period(&self) -> Option<usize> {
        None
    }

    /// Gradient evaluations performed by this instance so far.
    fn grad_evals(&self) -> u64 {
        0
    }
}

impl<M: DeterministicMap + ?Sized> DeterministicMap for Box<M> {
    fn forward(&self, s: &PhaseState) -> Result<PhaseState> {
        (**self).forward(s)
    }
    fn inverse(&self, s: &PhaseState) -> Result<PhaseState> {
        (**self).inverse(s)
    }
    fn step_log_jac(&self, s: &PhaseState) -> f64 {
        (**self).step_log_jac(s)
    }
    fn inverse_step_log_jac(&self, s: &PhaseState) -> f64 {
        (**self).inverse_step_log_jac(s)
    }
    fn period(&self) -> Option<usize> {
        (**self).period()
    }
    fn grad_evals(&self) -> u64 {
        (**self).grad_evals()
    }
}

impl<M: DeterministicMap + ?Sized> DeterministicMap for &M {
    fn forward(&self, s: &PhaseState) -> Result<PhaseState> {
        (**self).forward(s)
    }
    fn inverse(&self, s: &PhaseState) -> Result<PhaseState> {
        (**self).inverse(s)
    }
    fn step_log_jac(&self, s: &PhaseState) -> f64 {
        (**self).step_log_jac(s)
    }
    fn inverse_step_log_jac(&self, s: &PhaseState) -> f64 {
        (**self).inverse_step_log_jac(s)
    }
    fn period(&self) -> Option<usize> {
        (**self).period()
    }
    fn grad_evals(&self) -> u64 {
        (**self).grad_evals()
    }
}

/// `f^k(s)`: `k` forward applications, or `|k|` inverse applications when
/// `k < 0`.
pub fn iterate<M: DeterministicMap + ?Sized>(map: &M, s: &PhaseState, k: i64) -> Result<PhaseState> {
    let mut cur = s.clone();
    if k >= 0 {
        for _ in 0..k {
            cur = map.forward(&cur)?;
        }
    } else {
        for _ in 0..(-k) {
            cur = map.inverse(&cur)?;
        }
    }
    Ok(cur)
}

pub(crate) fn check_finite(values: &[f64], what: &str, x: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::numerical(format!("non-finite {what}"), x))
    }
}
