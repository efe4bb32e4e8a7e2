use super::Orbit;
use crate::dynamics::{DeterministicMap, PhaseState};
use crate::targets::TargetModel;

/// Acceptance probability of the escaping orbital kernel,
/// `min_{k in k_range} p(f^k(s)) |d f^k/ds| / p(s)`.
///
/// For a map with period `T` pass `k_range = (0, T - 1)`; the result is then
/// exact. For aperiodic maps the finite range only upper-bounds the true
/// infimum. Numerical failures while iterating give 0.
pub fn escaping_test<M: DeterministicMap + ?Sized>(
    target: &TargetModel,
    map: &M,
    s: &PhaseState,
    k_range: (i64, i64),
) -> f64 {
    m_step_test(target, map, s, 1, k_range)
}

/// Acceptance probability of the `m`-step kernel that jumps to `f^m(s)`.
pub fn m_step_test<M: DeterministicMap + ?Sized>(
    target: &TargetModel,
    map: &M,
    s: &PhaseState,
    m: i64,
    k_range: (i64, i64),
) -> f64 {
    let (lo, hi) = (k_range.0.min(0), k_range.1.max(0));
    let orbit = match map.period() {
        Some(t) if lo == 0 && hi as usize == t - 1 => {
            Orbit::build(target, map, s, 0, hi).map(|o| {
                let states = o.into_states();
                Orbit::from_states(target, states, 0, Some(t))
            })
        }
        _ => Orbit::build(target, map, s, lo, hi),
    };
    match orbit {
        Ok(o) => o.m_step_test(m),
        Err(_) => 0.0,
    }
}
