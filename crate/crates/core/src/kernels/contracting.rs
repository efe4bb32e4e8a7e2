use rand::Rng;

use super::{joint_log_density, resample_momentum, sample_index, StepOutput, WeightedSample};
use crate::dynamics::{DeterministicMap, PhaseState};
use crate::error::Result;
use crate::targets::TargetModel;

/// Default ratio `max weight / current weight` at which extension stops.
pub const DEFAULT_THRESHOLD: f64 = 1e3;
/// Default hard cap on extension steps per direction.
pub const DEFAULT_MAX_EXTENSION: usize = 10_000;

#[derive(Debug, Clone, Copy)]
pub struct ContractingOptions {
    pub threshold: f64,
    pub max_extension: usize,
}

impl Default for ContractingOptions {
    fn default() -> Self {
        ContractingOptions {
            threshold: DEFAULT_THRESHOLD,
            max_extension: DEFAULT_MAX_EXTENSION,
        }
    }
}

/// One iteration of the contracting orbital sampler.
///
/// Extends the orbit forward, then backward, while each new log-weight
/// stays above `log w_max - log W` for the running maximum `w_max`,
/// stopping at the first breach in each direction. A point where the map
/// fails numerically counts as a breach (its weight is taken as zero).
pub fn orbital_contracting_step<M: DeterministicMap + ?Sized, R: Rng + ?Sized>(
    target: &TargetModel,
    map: &M,
    s: &PhaseState,
    options: ContractingOptions,
    rng: &mut R,
) -> Result<StepOutput> {
    let log_threshold = options.threshold.ln();
    let mut origin = s.clone();
    origin.log_jac = 0.0;
    resample_momentum(&mut origin, rng);

    let (lw0, fresh) = joint_log_density(target, &origin);
    let mut density_evals = u64::from(fresh);
    if !lw0.is_finite() {
        return Ok(StepOutput::stay(origin, true));
    }
    let mut max_lw = lw0;
    let mut truncated = false;

    let mut extend = |forward: bool, max_lw: &mut f64| -> Vec<(PhaseState, f64)> {
        let mut out = Vec::new();
        let mut cur = origin.clone();
        for step in 0.. {
            if step == options.max_extension {
                truncated = true;
                break;
            }
            let next = if forward { map.forward(&cur) } else { map.inverse(&cur) };
            let Ok(next) = next else { break };
            let (lp, fresh) = joint_log_density(target, &next);
            density_evals += u64::from(fresh);
            let lw = lp + next.log_jac;
            if !(lw > *max_lw - log_threshold) {
                break;
            }
            *max_lw = max_lw.max(lw);
            out.push((next.clone(), lw));
            cur = next;
        }
        out
    };
    let forward = extend(true, &mut max_lw);
    let backward = extend(false, &mut max_lw);

    let mut points: Vec<(PhaseState, f64)> = backward.into_iter().rev().collect();
    let origin_index = points.len();
    points.push((origin, lw0));
    points.extend(forward);

    let log_weights: Vec<f64> = points.iter().map(|(_, lw)| *lw).collect();
    let weights = super::normalize_log_weights(&log_weights).expect("origin weight is finite");
    let total_rel: f64 = log_weights.iter().map(|lw| (lw - max_lw).exp()).sum();
    let tail_bound = points.len() as f64 / options.threshold / total_rel;

    let samples = points
        .iter()
        .zip(&weights)
        .map(|((st, _), w)| WeightedSample::new(st.x().to_vec(), *w))
        .collect();
    let j = sample_index(&weights, rng);
    let accept_prob = 1.0 - weights[origin_index];
    let mut next = points.swap_remove(j).0;
    next.log_jac = 0.0;

    Ok(StepOutput {
        samples,
        next,
        accept_prob,
        density_evals,
        numerical_failure: false,
        truncated,
        tail_bound,
    })
}
