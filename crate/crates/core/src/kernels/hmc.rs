use rand::Rng;

use super::{joint_log_density, resample_momentum, StepOutput, WeightedSample};
use crate::dynamics::{DeterministicMap, PhaseState};
use crate::error::{Error, Result};
use crate::targets::TargetModel;

/// Simulates `steps` map applications from `start`; stops early at a
/// numerical failure. Returns the states after each step and the
/// number of fresh density evaluations.
fn trajectory<M: DeterministicMap + ?Sized>(
    target: &TargetModel,
    map: &M,
    start: &PhaseState,
    steps: usize,
) -> (Vec<(PhaseState, f64)>, u64) {
    let mut out = Vec::with_capacity(steps);
    let mut evals = 0;
    let mut cur = start.clone();
    for _ in 0..steps {
        match map.forward(&cur) {
            Ok(next) => {
                let (lp, fresh) = joint_log_density(target, &next);
                evals += u64::from(fresh);
                out.push((next.clone(), lp + next.log_jac));
                cur = next;
            }
            Err(_) => break,
        }
    }
    (out, evals)
}

fn accept_probability(log_ratio: f64) -> f64 {
    if log_ratio.is_nan() {
        0.0
    } else {
        log_ratio.exp().min(1.0)
    }
}

/// Standard HMC: refresh momentum, integrate `steps` steps, flip the
/// momentum and apply the Metropolis-Hastings test on the joint density.
pub fn hmc_step<M: DeterministicMap + ?Sized, R: Rng + ?Sized>(
    target: &TargetModel,
    map: &M,
    s: &PhaseState,
    steps: usize,
    rng: &mut R,
) -> Result<StepOutput> {
    hmc_step_with_proposal(target, map, s, steps, rng).map(|(out, _)| out)
}

/// [`hmc_step`] that also returns the trajectory endpoint before the
/// momentum flip, or `None` after a numerical failure. Trajectory-length
/// adaptation needs the proposal whether or not it was accepted.
pub fn hmc_step_with_proposal<M: DeterministicMap + ?Sized, R: Rng + ?Sized>(
    target: &TargetModel,
    map: &M,
    s: &PhaseState,
    steps: usize,
    rng: &mut R,
) -> Result<(StepOutput, Option<PhaseState>)> {
    if steps == 0 {
        return Err(Error::invalid("HMC needs at least one integration step"));
    }
    let mut start = s.clone();
    start.log_jac = 0.0;
    resample_momentum(&mut start, rng);
    let (lw0, fresh) = joint_log_density(target, &start);
    let (mut path, evals) = trajectory(target, map, &start, steps);
    let density_evals = evals + u64::from(fresh);
    if path.len() < steps {
        let mut out = StepOutput::stay(start, true);
        out.density_evals = density_evals;
        return Ok((out, None));
    }
    let (proposal, lw) = path.pop().expect("non-empty trajectory");
    let a = accept_probability(lw - lw0);
    let next = if rng.random::<f64>() < a {
        let mut next = proposal.clone();
        for v in next.v.iter_mut() {
            *v = -*v;
        }
        next.log_jac = 0.0;
        next
    } else {
        start
    };
    let out = StepOutput {
        samples: vec![WeightedSample::new(next.x().to_vec(), 1.0)],
        next,
        accept_prob: a,
        density_evals,
        numerical_failure: false,
        truncated: false,
        tail_bound: 0.0,
    };
    Ok((out, Some(proposal)))
}

/// Recycled HMC. Every intermediate point `z_i` of the trajectory gets its
/// own Metropolis-Hastings decision against the start point,
/// `min(1, p(z_i) / p(z_0))`, with an independent uniform; the outcome
/// (`z_i` if accepted, `z_0` otherwise) is emitted with weight `1/L`. Each
/// outcome is a draw from the `i`-step HMC kernel, so the pool is unbiased.
/// The next chain state is the decision at `i = L`.
pub fn recycled_hmc_step<M: DeterministicMap + ?Sized, R: Rng + ?Sized>(
    target: &TargetModel,
    map: &M,
    s: &PhaseState,
    steps: usize,
    rng: &mut R,
) -> Result<StepOutput> {
    if steps == 0 {
        return Err(Error::invalid("HMC needs at least one integration step"));
    }
    let mut start = s.clone();
    start.log_jac = 0.0;
    resample_momentum(&mut start, rng);
    let (lw0, fresh) = joint_log_density(target, &start);
    let (path, evals) = trajectory(target, map, &start, steps);
    let weight = 1.0 / steps as f64;

    let mut samples = Vec::with_capacity(steps);
    let mut last = None;
    let mut last_prob = 0.0;
    for i in 0..steps {
        let accepted = match path.get(i) {
            Some((_, lw)) => {
                let a = accept_probability(lw - lw0);
                if i + 1 == steps {
                    last_prob = a;
                }
                rng.random::<f64>() < a
            }
            None => false,
        };
        let chosen = if accepted { &path[i].0 } else { &start };
        samples.push(WeightedSample::new(chosen.x().to_vec(), weight));
        if i + 1 == steps {
            last = Some(accepted);
        }
    }
    let next = if last == Some(true) {
        let mut p = path.last().expect("accepted endpoint exists").0.clone();
        p.log_jac = 0.0;
        p
    } else {
        start
    };
    Ok(StepOutput {
        samples,
        next,
        accept_prob: last_prob,
        density_evals: evals + u64::from(fresh),
        numerical_failure: path.len() < steps,
        truncated: false,
        tail_bound: 0.0,
    })
}
