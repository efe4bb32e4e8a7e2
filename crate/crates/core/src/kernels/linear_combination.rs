use rand::Rng;

use super::{resample_momentum, sample_index, Orbit, StepOutput, WeightedSample};
use crate::dynamics::{DeterministicMap, PeriodicWrap, PhaseState};
use crate::error::{Error, Result};
use crate::targets::TargetModel;

/// One iteration of the mixture `sum_m w_m k_m` of `m`-step escaping
/// kernels on a periodic orbit. All tests `g_m` reuse one evaluation of the
/// orbit; each component's accept/reject outcome is emitted with weight
/// `w_m`, and the next state is drawn among the outcomes by `w`.
pub fn linear_combination_step<M: DeterministicMap, R: Rng + ?Sized>(
    target: &TargetModel,
    wrapped: &PeriodicWrap<M>,
    s: &PhaseState,
    weights: &[f64],
    rng: &mut R,
) -> Result<StepOutput> {
    let period = wrapped.period().expect("wrapped maps are periodic");
    if weights.len() != period {
        return Err(Error::invalid(format!(
            "need {period} mixture weights, got {}",
            weights.len()
        )));
    }
    if weights.iter().any(|w| *w < 0.0) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("mixture weights must be non-negative and sum to 1"));
    }
    let mut start = s.clone();
    resample_momentum(&mut start, rng);
    let orbit = match Orbit::build_periodic(target, wrapped, &start) {
        Ok(o) => o,
        Err(e) if e.is_numerical_failure() => return Ok(StepOutput::stay(start, true)),
        Err(e) => return Err(e),
    };

    let mut outcomes: Vec<(i64, f64)> = Vec::new();
    let mut accept_prob = 0.0;
    for (m, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let g = orbit.m_step_test(m as i64);
        accept_prob += w * g;
        let index = if rng.random::<f64>() < g { m as i64 } else { 0 };
        outcomes.push((index, w));
    }
    let samples = outcomes
        .iter()
        .map(|(i, w)| WeightedSample::new(orbit.state(*i).expect("on orbit").x().to_vec(), *w))
        .collect();
    let probs: Vec<f64> = outcomes.iter().map(|(_, w)| *w).collect();
    let pick = outcomes[sample_index(&probs, rng)].0;
    let mut next = orbit.state(pick).expect("on orbit").clone();
    next.log_jac = 0.0;

    Ok(StepOutput {
        samples,
        next,
        accept_prob,
        density_evals: orbit.density_evals(),
        numerical_failure: false,
        truncated: false,
        tail_bound: 0.0,
    })
}
