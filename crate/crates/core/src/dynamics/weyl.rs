use rand::Rng;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::{DeterministicMap, PhaseState};
use crate::error::{Error, Result};

/// `frac(sqrt(2))`, the default rotation constant.
pub const SQRT2_FRACTION: f64 = std::f64::consts::SQRT_2 - 1.0;

/// A one-dimensional density with CDF and inverse CDF.
pub trait Continuous1d: Send + Sync {
    fn cdf(&self, x: f64) -> f64;
    fn inverse_cdf(&self, u: f64) -> f64;
    fn ln_pdf(&self, x: f64) -> f64;
    fn sample(&self, rng: &mut dyn rand::RngCore) -> f64;
}

/// `N(mean, variance)` on the real line.
#[derive(Debug, Clone, Copy)]
pub struct Normal1d {
    inner: Normal,
    mean: f64,
    sd: f64,
}

impl Normal1d {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        let sd = variance.sqrt();
        Normal::new(mean, sd)
            .map(|inner| Normal1d { inner, mean, sd })
            .map_err(|e| Error::invalid(e.to_string()))
    }
}

impl Continuous1d for Normal1d {
    fn cdf(&self, x: f64) -> f64 {
        self.inner.cdf(x)
    }
    fn inverse_cdf(&self, u: f64) -> f64 {
        self.inner.inverse_cdf(u)
    }
    fn ln_pdf(&self, x: f64) -> f64 {
        self.inner.ln_pdf(x)
    }
    fn sample(&self, rng: &mut dyn rand::RngCore) -> f64 {
        let z: f64 = rng.sample(rand_distr::StandardNormal);
        self.mean + self.sd * z
    }
}

/// `x -> F^-1((F(x) + a) mod 1)`. Preserves the density `q` whose CDF is
/// `F`; the step log-Jacobian is `log q(x) - log q(f(x))`.
#[derive(Debug, Clone)]
pub struct WeylMap<Q> {
    density: Q,
    shift: f64,
}

pub fn weyl_map<Q: Continuous1d>(density: Q, shift: f64) -> WeylMap<Q> {
    WeylMap {
        density,
        shift: shift.rem_euclid(1.0),
    }
}

impl<Q: Continuous1d> WeylMap<Q> {
    pub fn density(&self) -> &Q {
        &self.density
    }

    fn shifted(&self, s: &PhaseState, shift: f64) -> Result<PhaseState> {
        let x = s.x()[0];
        let u = self.density.cdf(x);
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::numerical(format!("cdf value {u} outside (0, 1)"), s.x()));
        }
        let u_next = (u + shift).rem_euclid(1.0);
        if !(u_next > 0.0 && u_next < 1.0) {
            return Err(Error::numerical(format!("shifted cdf value {u_next} outside (0, 1)"), s.x()));
        }
        let x_next = self.density.inverse_cdf(u_next);
        if !x_next.is_finite() {
            return Err(Error::numerical("inverse cdf is not finite", s.x()));
        }
        let mut out = PhaseState::new(vec![x_next], s.v.clone());
        out.d = s.d;
        out.log_jac = s.log_jac + self.density.ln_pdf(x) - self.density.ln_pdf(x_next);
        Ok(out)
    }
}

impl<Q: Continuous1d> DeterministicMap for WeylMap<Q> {
    fn forward(&self, s: &PhaseState) -> Result<PhaseState> {
        self.shifted(s, self.shift)
    }

    fn inverse(&self, s: &PhaseState) -> Result<PhaseState> {
        self.shifted(s, -self.shift)
    }

    fn step_log_jac(&self, s: &PhaseState) -> f64 {
        match self.forward(s) {
            Ok(next) => next.log_jac - s.log_jac,
            Err(_) => f64::NAN,
        }
    }
}
