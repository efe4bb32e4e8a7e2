use rand::Rng;

use super::{resample_momentum, sample_index, DirectionUpdate, Orbit, StepOutput, WeightedSample};
use crate::dynamics::{DeterministicMap, PeriodicWrap, PhaseState};
use crate::error::{Error, Result};
use crate::targets::TargetModel;

/// One iteration of the periodic orbital sampler: refresh momentum, weigh
/// the whole `T`-point orbit of the wrapped map, emit every point with its
/// normalized weight, and move to a point drawn by weight.
///
/// A numerical failure anywhere on the orbit rejects the step: the current
/// state is emitted with weight one.
pub fn orbital_periodic_step<M: DeterministicMap, R: Rng + ?Sized>(
    target: &TargetModel,
    wrapped: &PeriodicWrap<M>,
    s: &PhaseState,
    direction: DirectionUpdate,
    rng: &mut R,
) -> Result<StepOutput> {
    let period = wrapped.period().expect("wrapped maps are periodic");
    if s.d.is_none() {
        return Err(Error::invalid("periodic step needs a direction index"));
    }
    let mut start = s.clone();
    resample_momentum(&mut start, rng);

    let orbit = match Orbit::build_periodic(target, wrapped, &start) {
        Ok(o) => o,
        Err(e) if e.is_numerical_failure() => return Ok(StepOutput::stay(start, true)),
        Err(e) => return Err(e),
    };
    let Some(weights) = orbit.normalized_weights() else {
        return Ok(StepOutput::stay(start, true));
    };
    let density_evals = orbit.density_evals();
    let origin = orbit.origin_index();
    let j = sample_index(&weights, rng);
    let samples = orbit
        .states()
        .iter()
        .zip(&weights)
        .map(|(st, w)| WeightedSample::new(st.x().to_vec(), *w))
        .collect();
    let accept_prob = 1.0 - weights[origin];

    let mut next = orbit.into_states().swap_remove(j);
    next.log_jac = 0.0;
    let d = next.d.expect("orbit states carry directions");
    next.d = Some(match direction {
        DirectionUpdate::Keep => d,
        DirectionUpdate::ShiftHalf if period.is_multiple_of(2) => (d + period / 2) % period,
        DirectionUpdate::ShiftHalf | DirectionUpdate::Resample => rng.random_range(0..period),
    });

    Ok(StepOutput {
        samples,
        next,
        accept_prob,
        density_evals,
        numerical_failure: false,
        truncated: false,
        tail_bound: 0.0,
    })
}
