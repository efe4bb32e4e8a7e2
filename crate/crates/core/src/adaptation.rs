//! Step-size and trajectory-length adaptation for jittered HMC.
//!
//! Step size follows the dual-averaging recursion toward a target
//! acceptance rate. The maximum trajectory length `t_max` follows
//! stochastic-gradient ascent on the ChEES criterion, computed across
//! chains that run in lockstep; per-iteration trajectory lengths are drawn
//! from `Uniform(0, t_max)`.
//!
//! The ChEES learning rate, the Adam-style second-moment decay and the
//! `t_max` clamp bounds are our own defaults.

use rand::Rng;
use rayon::prelude::*;

use crate::dynamics::{leapfrog, DeterministicMap, PhaseState};
use crate::error::{Error, Result};
use crate::kernels::hmc_step_with_proposal;
use crate::targets::TargetModel;

pub const DEFAULT_TARGET_ACCEPT: f64 = 0.65;
pub const DEFAULT_CHEES_LEARNING_RATE: f64 = 0.025;
pub const DEFAULT_T_MAX_BOUNDS: (f64, f64) = (1e-2, 1e2);
/// Leapfrog steps allowed in one adaptation trajectory.
pub const MAX_LEAPFROG_STEPS: usize = 1000;

const DA_GAMMA: f64 = 0.05;
const DA_T0: f64 = 10.0;
const DA_KAPPA: f64 = 0.75;
const ADAM_BETA2: f64 = 0.95;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptState {
    pub log_eps: f64,
    pub log_eps_avg: f64,
    pub h_avg: f64,
    /// Dual-averaging iterations seen.
    pub iteration: u64,
    pub target_accept: f64,
    /// Shrinkage point of dual averaging (the log of the initial step).
    pub mu: f64,
    pub t_max: f64,
    pub log_t_max_avg: f64,
    pub t_max_bounds: (f64, f64),
    pub chees_learning_rate: f64,
    /// ChEES updates seen.
    pub chees_iteration: u64,
    grad_sq_avg: f64,
    pub adapt_step_size: bool,
    pub adapt_trajectory: bool,
}

impl AdaptState {
    pub fn new(eps: f64, t_max: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::invalid(format!("initial step size must be positive, got {eps}")));
        }
        if !(t_max > 0.0 && t_max.is_finite()) {
            return Err(Error::invalid(format!("initial t_max must be positive, got {t_max}")));
        }
        Ok(AdaptState {
            log_eps: eps.ln(),
            log_eps_avg: eps.ln(),
            h_avg: 0.0,
            iteration: 0,
            target_accept: DEFAULT_TARGET_ACCEPT,
            mu: eps.ln(),
            t_max,
            log_t_max_avg: t_max.ln(),
            t_max_bounds: DEFAULT_T_MAX_BOUNDS,
            chees_learning_rate: DEFAULT_CHEES_LEARNING_RATE,
            chees_iteration: 0,
            grad_sq_avg: 0.0,
            adapt_step_size: true,
            adapt_trajectory: true,
        })
    }

    /// Step size used during adaptation.
    pub fn eps(&self) -> f64 {
        self.log_eps.exp()
    }

    /// Step size frozen after adaptation (the iterate average).
    pub fn final_eps(&self) -> f64 {
        self.log_eps_avg.exp()
    }

    /// `t_max` frozen after adaptation (geometric iterate average).
    pub fn final_t_max(&self) -> f64 {
        self.log_t_max_avg.exp()
    }
}

/// One dual-averaging step toward `a.target_accept`.
pub fn dual_averaging_update(a: &AdaptState, observed_accept: f64) -> AdaptState {
    let mut next = a.clone();
    if !a.adapt_step_size {
        return next;
    }
    let accept = if observed_accept.is_nan() { 0.0 } else { observed_accept.clamp(0.0, 1.0) };
    next.iteration += 1;
    let m = next.iteration as f64;
    let w = 1.0 / (m + DA_T0);
    next.h_avg = (1.0 - w) * a.h_avg + w * (a.target_accept - accept);
    next.log_eps = a.mu - m.sqrt() / DA_GAMMA * next.h_avg;
    let eta = m.powf(-DA_KAPPA);
    next.log_eps_avg = eta * next.log_eps + (1.0 - eta) * a.log_eps_avg;
    next
}

/// What one chain contributes to a ChEES update.
#[derive(Debug, Clone)]
pub struct CheesTransition {
    pub start: Vec<f64>,
    /// Trajectory endpoint, accepted or not.
    pub proposal: Vec<f64>,
    pub proposal_momentum: Vec<f64>,
    pub accept_prob: f64,
    /// Trajectory length as a fraction of `t_max`.
    pub jitter: f64,
}

/// Acceptance-weighted ChEES gradient with respect to `t_max`.
pub fn chees_gradient(transitions: &[CheesTransition]) -> f64 {
    let usable: Vec<&CheesTransition> = transitions
        .iter()
        .filter(|t| t.proposal.iter().chain(&t.proposal_momentum).all(|v| v.is_finite()))
        .collect();
    if usable.len() < 2 {
        return 0.0;
    }
    let dim = usable[0].start.len();
    let n = usable.len() as f64;
    let total_accept: f64 = usable.iter().map(|t| t.accept_prob).sum();
    let mut start_mean = vec![0.0; dim];
    let mut proposal_mean = vec![0.0; dim];
    for t in &usable {
        for i in 0..dim {
            start_mean[i] += t.start[i] / n;
            proposal_mean[i] += t.accept_prob * t.proposal[i] / (total_accept + 1e-20);
        }
    }
    let mut num = 0.0;
    for t in &usable {
        let mut change = 0.0;
        let mut dot = 0.0;
        for i in 0..dim {
            let cp = t.proposal[i] - proposal_mean[i];
            let cs = t.start[i] - start_mean[i];
            change += cp * cp - cs * cs;
            dot += cp * t.proposal_momentum[i];
        }
        num += t.accept_prob * t.jitter * change * dot;
    }
    let g = num / (total_accept + 1e-20);
    if g.is_finite() {
        g
    } else {
        0.0
    }
}

/// One ascent step on `log t_max` from the chains' transitions. Fewer than
/// two chains leave the state unchanged.
pub fn chees_update(a: &AdaptState, transitions: &[CheesTransition]) -> AdaptState {
    let mut next = a.clone();
    if !a.adapt_trajectory {
        return next;
    }
    if transitions.len() < 2 {
        log::warn!("ChEES needs at least two chains; t_max left at {}", a.t_max);
        return next;
    }
    // gradient in log t_max
    let g = chees_gradient(transitions) * a.t_max;
    next.chees_iteration += 1;
    next.grad_sq_avg = ADAM_BETA2 * a.grad_sq_avg + (1.0 - ADAM_BETA2) * g * g;
    let v_hat = next.grad_sq_avg / (1.0 - ADAM_BETA2.powi(next.chees_iteration as i32));
    let log_t = a.t_max.ln() + a.chees_learning_rate * g / (v_hat.sqrt() + ADAM_EPS);
    let (lo, hi) = a.t_max_bounds;
    next.t_max = log_t.exp().clamp(lo, hi);
    let eta = (next.chees_iteration as f64).powf(-DA_KAPPA);
    next.log_t_max_avg = eta * next.t_max.ln() + (1.0 - eta) * a.log_t_max_avg;
    next
}

/// A chain taking part in lockstep adaptation.
#[derive(Debug, Clone)]
pub struct AdaptChain<R> {
    pub state: PhaseState,
    pub rng: R,
    pub grad_evals: u64,
    pub density_evals: u64,
    pub failures: u64,
}

impl<R> AdaptChain<R> {
    pub fn new(x: Vec<f64>, rng: R) -> Self {
        let dim = x.len();
        AdaptChain {
            state: PhaseState::new(x, vec![0.0; dim]),
            rng,
            grad_evals: 0,
            density_evals: 0,
            failures: 0,
        }
    }
}

/// Summary of a lockstep run.
#[derive(Debug, Clone)]
pub struct AdaptationRun {
    pub state: AdaptState,
    /// Mean acceptance probability per iteration, averaged over chains.
    pub accept_history: Vec<f64>,
    pub t_max_history: Vec<f64>,
}

/// Runs `iterations` jittered-HMC iterations on all chains in lockstep. The
/// jitter `u ~ Uniform(0, 1)` is shared by all chains in an iteration and
/// drawn from `jitter_rng`. After every iteration the step size is updated
/// from the mean acceptance and `t_max` from the ChEES gradient.
pub fn adapt_chees_hmc<R, J>(
    target: &TargetModel,
    chains: &mut [AdaptChain<R>],
    iterations: usize,
    mut state: AdaptState,
    jitter_rng: &mut J,
) -> Result<AdaptationRun>
where
    R: Rng + Send,
    J: Rng + ?Sized,
{
    if chains.is_empty() {
        return Err(Error::invalid("adaptation needs at least one chain"));
    }
    let mut accept_history = Vec::with_capacity(iterations);
    let mut t_max_history = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let eps = state.eps();
        let u: f64 = jitter_rng.random();
        let steps = ((u * state.t_max / eps).ceil() as usize).clamp(1, MAX_LEAPFROG_STEPS);
        let jitter = steps as f64 * eps / state.t_max;
        let results: Vec<Result<CheesTransition>> = chains
            .par_iter_mut()
            .map(|chain| {
                let map = leapfrog(target.clone(), eps)?;
                if chain.state.cached_gradient().is_none() {
                    map.prepare(&mut chain.state)?;
                }
                let start = chain.state.x().to_vec();
                let (out, proposal) = hmc_step_with_proposal(target, &map, &chain.state, steps, &mut chain.rng)?;
                chain.grad_evals += map.grad_evals();
                chain.density_evals += out.density_evals;
                chain.failures += u64::from(out.numerical_failure);
                let (proposal, proposal_momentum) = match proposal {
                    Some(p) => (p.x().to_vec(), p.v.clone()),
                    None => (vec![f64::NAN; start.len()], vec![f64::NAN; start.len()]),
                };
                chain.state = out.next;
                Ok(CheesTransition {
                    start,
                    proposal,
                    proposal_momentum,
                    accept_prob: out.accept_prob,
                    jitter,
                })
            })
            .collect();
        let transitions = results.into_iter().collect::<Result<Vec<_>>>()?;
        let mean_accept = transitions.iter().map(|t| t.accept_prob).sum::<f64>() / transitions.len() as f64;
        state = dual_averaging_update(&state, mean_accept);
        state = chees_update(&state, &transitions);
        accept_history.push(mean_accept);
        t_max_history.push(state.t_max);
    }
    Ok(AdaptationRun {
        state,
        accept_history,
        t_max_history,
    })
}
