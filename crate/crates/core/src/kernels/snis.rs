use rand::Rng;

use super::{normalize_log_weights, WeightedSample};
use crate::dynamics::{DeterministicMap, PhaseState};
use crate::error::{Error, Result};
use crate::targets::TargetModel;

/// Self-normalized importance weights along the forward orbit
/// `x_0, f(x_0), .., f^{n-1}(x_0)`:
/// `w_i ∝ p(f^i(x_0)) |d f^i/dx|`. The map's own Jacobian replaces the
/// proposal density, so `q` never needs to be known.
pub fn deterministic_snis<M: DeterministicMap + ?Sized>(
    target: &TargetModel,
    map: &M,
    x0: &PhaseState,
    n: usize,
) -> Result<Vec<WeightedSample>> {
    if n == 0 {
        return Err(Error::invalid("need at least one point"));
    }
    let mut points = Vec::with_capacity(n);
    let mut cur = x0.clone();
    cur.log_jac = 0.0;
    for i in 0..n {
        if i > 0 {
            cur = map.forward(&cur)?;
        }
        let lw = target.log_density(cur.x()) + cur.log_jac;
        points.push((cur.x().to_vec(), lw));
    }
    weighted(points)
}

/// Classic SNIS: `n` draws from the proposal weighted by `p / q`.
pub fn stochastic_snis<R, S, Q>(
    target: &TargetModel,
    mut sample_proposal: S,
    log_proposal: Q,
    n: usize,
    rng: &mut R,
) -> Result<Vec<WeightedSample>>
where
    R: Rng + ?Sized,
    S: FnMut(&mut R) -> Vec<f64>,
    Q: Fn(&[f64]) -> f64,
{
    if n == 0 {
        return Err(Error::invalid("need at least one point"));
    }
    let points = (0..n)
        .map(|_| {
            let x = sample_proposal(rng);
            let lw = target.log_density(&x) - log_proposal(&x);
            (x, lw)
        })
        .collect();
    weighted(points)
}

fn weighted(points: Vec<(Vec<f64>, f64)>) -> Result<Vec<WeightedSample>> {
    let log_w: Vec<f64> = points.iter().map(|(_, lw)| *lw).collect();
    let w = normalize_log_weights(&log_w)
        .ok_or_else(|| Error::numerical("all importance weights vanish", &points[0].0))?;
    Ok(points
        .into_iter()
        .zip(w)
        .map(|((x, _), w)| WeightedSample::new(x, w))
        .collect())
}
