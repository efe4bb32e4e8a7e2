use super::joint_log_density;
use crate::dynamics::{DeterministicMap, PeriodicWrap, PhaseState};
use crate::error::{Error, Result};
use crate::targets::TargetModel;

/// A contiguous stretch `f^i(s)`, `i in [lo, hi]` (with `lo <= 0 <= hi`),
/// of the orbit through `s`, with log-weights
/// `log p(f^i(s)) + log |d f^i / ds|` relative to `s`.
///
/// A periodic orbit stores exactly one period and resolves any integer
/// index modulo `T`.
#[derive(Debug, Clone)]
pub struct Orbit {
    states: Vec<PhaseState>,
    log_weights: Vec<f64>,
    lo: i64,
    period: Option<usize>,
    density_evals: u64,
}

impl Orbit {
    /// Iterates `map` from `s` over `lo..=hi`.
    pub fn build<M: DeterministicMap + ?Sized>(
        target: &TargetModel,
        map: &M,
        s: &PhaseState,
        lo: i64,
        hi: i64,
    ) -> Result<Orbit> {
        if lo > 0 || hi < 0 {
            return Err(Error::invalid(format!("orbit range [{lo}, {hi}] must contain 0")));
        }
        let mut origin = s.clone();
        origin.log_jac = 0.0;

        let mut backward = Vec::with_capacity((-lo) as usize);
        let mut cur = origin.clone();
        for _ in lo..0 {
            cur = map.inverse(&cur)?;
            backward.push(cur.clone());
        }
        let mut states: Vec<PhaseState> = backward.into_iter().rev().collect();
        states.push(origin.clone());
        let mut cur = origin;
        for _ in 0..hi {
            cur = map.forward(&cur)?;
            states.push(cur.clone());
        }
        Ok(Self::from_states(target, states, lo, None))
    }

    /// One full period of a wrapped map, iterating the underlying map over
    /// `[-d, T-1-d]` so no wrap-around step is ever evaluated. Index `k`
    /// of the result is `f_hat^k(s)`.
    pub fn build_periodic<M: DeterministicMap>(
        target: &TargetModel,
        wrapped: &PeriodicWrap<M>,
        s: &PhaseState,
    ) -> Result<Orbit> {
        let period = wrapped.period().expect("wrapped maps are periodic");
        let d = match s.d {
            Some(d) if d < period => d,
            _ => return Err(Error::invalid("periodic orbit needs a direction index below the period")),
        };
        let lo = -(d as i64);
        let hi = (period - 1 - d) as i64;
        let mut orbit = Self::build(target, wrapped.inner(), s, lo, hi)?;
        for (j, state) in (lo..=hi).zip(orbit.states.iter_mut()) {
            state.d = Some((d as i64 + j).rem_euclid(period as i64) as usize);
        }
        orbit.period = Some(period);
        Ok(orbit)
    }

    /// Orbit from precomputed states ordered by index starting at `lo`.
    pub fn from_states(target: &TargetModel, states: Vec<PhaseState>, lo: i64, period: Option<usize>) -> Orbit {
        let mut density_evals = 0;
        let log_weights = states
            .iter()
            .map(|st| {
                let (lp, fresh) = joint_log_density(target, st);
                density_evals += u64::from(fresh);
                lp + st.log_jac
            })
            .collect();
        Orbit {
            states,
            log_weights,
            lo,
            period,
            density_evals,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn period(&self) -> Option<usize> {
        self.period
    }

    /// Inclusive index range covered.
    pub fn index_range(&self) -> (i64, i64) {
        (self.lo, self.lo + self.states.len() as i64 - 1)
    }

    /// Position of index 0 in [`states`](Self::states).
    pub fn origin_index(&self) -> usize {
        (-self.lo) as usize
    }

    pub fn states(&self) -> &[PhaseState] {
        &self.states
    }

    pub fn into_states(self) -> Vec<PhaseState> {
        self.states
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn density_evals(&self) -> u64 {
        self.density_evals
    }

    fn slot(&self, i: i64) -> Option<usize> {
        let (lo, hi) = self.index_range();
        match self.period {
            Some(t) => Some((lo + (i - lo).rem_euclid(t as i64) - lo) as usize),
            None if i >= lo && i <= hi => Some((i - lo) as usize),
            None => None,
        }
    }

    pub fn state(&self, i: i64) -> Option<&PhaseState> {
        self.slot(i).map(|k| &self.states[k])
    }

    pub fn log_weight(&self, i: i64) -> Option<f64> {
        self.slot(i).map(|k| self.log_weights[k])
    }

    /// Log of `p(f^i(s)) |d f^i/ds| / p(s)`.
    pub fn log_ratio(&self, i: i64) -> Option<f64> {
        Some(self.log_weight(i)? - self.log_weights[self.origin_index()])
    }

    /// Weights normalized over the stored points; `None` when they are all
    /// zero.
    pub fn normalized_weights(&self) -> Option<Vec<f64>> {
        super::normalize_log_weights(&self.log_weights)
    }

    /// Minimum of the density ratio over the stored points, clamped to
    /// `[0, 1]`; exact for periodic orbits.
    pub fn escaping_test(&self) -> f64 {
        self.m_step_test(1)
    }

    /// `min_k p(f^{mk}(s)) |d f^{mk}/ds| / p(s)` over all `mk` available:
    /// every residue class modulo `T` for periodic orbits, otherwise the
    /// multiples of `m` inside the stored range.
    pub fn m_step_test(&self, m: i64) -> f64 {
        let lw0 = self.log_weights[self.origin_index()];
        let indices: Vec<i64> = match self.period {
            Some(t) => (0..t as i64).map(|k| m * k).collect(),
            None => {
                let (lo, hi) = self.index_range();
                if m == 0 {
                    vec![0]
                } else {
                    (lo..=hi).filter(|i| i % m == 0).collect()
                }
            }
        };
        let mut g = 1.0f64;
        for i in indices {
            let lw = self.log_weight(i).expect("index resolved");
            let ratio = if i == 0 { 1.0 } else { (lw - lw0).exp() };
            if ratio.is_nan() {
                return 0.0;
            }
            g = g.min(ratio);
        }
        g.clamp(0.0, 1.0)
    }
}
