use rand::Rng;

use super::{Orbit, StepOutput, WeightedSample};
use crate::dynamics::{DeterministicMap, PhaseState};
use crate::error::{Error, Result};
use crate::targets::TargetModel;

/// Choice of the normalizing constant `c` in the diffusing tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CChoice {
    /// `c = 1/2 inf_k 1 / (p(f^k) |df^k|)`.
    HalfInf,
    /// `c = inf_k 1 / (p(f^{k+1}) |df^{k+1}| + p(f^{k-1}) |df^{k-1}|)`,
    /// the smallest rejection probability.
    Optimal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusingTests {
    pub g_plus: f64,
    pub g_minus: f64,
}

/// `log c` relative to the orbit's origin.
fn log_c(orbit: &Orbit, choice: CChoice, k_range: (i64, i64)) -> Result<f64> {
    let lw = |i: i64| orbit.log_weight(i).unwrap_or(f64::NEG_INFINITY);
    let max = match choice {
        CChoice::HalfInf => (k_range.0..=k_range.1).map(lw).fold(f64::NEG_INFINITY, f64::max),
        CChoice::Optimal => (k_range.0..=k_range.1)
            .map(|k| log_add_exp(lw(k + 1), lw(k - 1)))
            .fold(f64::NEG_INFINITY, f64::max),
    };
    if max.is_nan() || max == f64::INFINITY {
        return Err(Error::DegenerateKernel(
            "orbit weights are unbounded so c = 0; use the escaping kernel instead".into(),
        ));
    }
    Ok(match choice {
        CChoice::HalfInf => 0.5f64.ln() - max,
        CChoice::Optimal => -max,
    })
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `g+ = p(f(s)) |df/ds| c` and `g- = p(f^-1(s)) |df^-1/ds| c` with the
/// infimum in `c` taken over `k_range`. The orbit is evaluated on
/// `k_range` widened by one on each side.
pub fn diffusing_tests<M: DeterministicMap + ?Sized>(
    target: &TargetModel,
    map: &M,
    s: &PhaseState,
    k_range: (i64, i64),
    choice: CChoice,
) -> Result<DiffusingTests> {
    let lo = k_range.0.min(0);
    let hi = k_range.1.max(0);
    let orbit = Orbit::build(target, map, s, lo - 1, hi + 1)?;
    tests_on_orbit(&orbit, choice, (lo, hi))
}

pub(crate) fn tests_on_orbit(orbit: &Orbit, choice: CChoice, k_range: (i64, i64)) -> Result<DiffusingTests> {
    let log_c = log_c(orbit, choice, k_range)?;
    let g = |i: i64| orbit.log_weight(i).map_or(0.0, |lw| (lw + log_c).exp());
    let (mut g_plus, mut g_minus) = (g(1), g(-1));
    let total = g_plus + g_minus;
    if total > 1.0 {
        // rounding only; c bounds the sum by one
        g_plus /= total;
        g_minus /= total;
    }
    Ok(DiffusingTests { g_plus, g_minus })
}

/// Moves to `f(s)` with probability `g+`, to `f^-1(s)` with probability
/// `g-`, and stays otherwise.
pub fn diffusing_step<M: DeterministicMap + ?Sized, R: Rng + ?Sized>(
    target: &TargetModel,
    map: &M,
    s: &PhaseState,
    k_range: (i64, i64),
    choice: CChoice,
    rng: &mut R,
) -> Result<StepOutput> {
    let lo = k_range.0.min(0);
    let hi = k_range.1.max(0);
    let orbit = match Orbit::build(target, map, s, lo - 1, hi + 1) {
        Ok(o) => o,
        Err(e) if e.is_numerical_failure() => return Ok(StepOutput::stay(s.clone(), true)),
        Err(e) => return Err(e),
    };
    let tests = tests_on_orbit(&orbit, choice, (lo, hi))?;
    let u: f64 = rng.random();
    let index = if u < tests.g_plus {
        1
    } else if u < tests.g_plus + tests.g_minus {
        -1
    } else {
        0
    };
    let mut next = orbit.state(index).expect("neighbours are on the orbit").clone();
    next.log_jac = 0.0;
    Ok(StepOutput {
        samples: vec![WeightedSample::new(next.x().to_vec(), 1.0)],
        next,
        accept_prob: tests.g_plus + tests.g_minus,
        density_evals: orbit.density_evals(),
        numerical_failure: false,
        truncated: false,
        tail_bound: 0.0,
    })
}
