use super::{DeterministicMap, PhaseState};
use crate::error::{Error, Result};

/// Wraps `f` into a map on `(state, d)` whose orbits all have period `T`:
/// `(s, d) -> (f(s), d + 1)` for `d < T - 1`, and
/// `(s, T - 1) -> (f^-(T-1)(s), 0)`.
#[derive(Debug)]
pub struct PeriodicWrap<M> {
    inner: M,
    period: usize,
}

pub fn periodic_wrap<M: DeterministicMap>(map: M, period: usize) -> Result<PeriodicWrap<M>> {
    if period < 2 {
        return Err(Error::invalid(format!("period must be at least 2, got {period}")));
    }
    Ok(PeriodicWrap { inner: map, period })
}

impl<M> PeriodicWrap<M> {
    pub fn inner(&self) -> &M {
        &self.inner
    }

    pub fn into_inner(self) -> M {
        self.inner
    }

    fn direction(&self, s: &PhaseState) -> Result<usize> {
        match s.d {
            Some(d) if d < self.period => Ok(d),
            Some(d) => Err(Error::invalid(format!("direction {d} outside 0..{}", self.period))),
            None => Err(Error::invalid("periodic map needs a direction index on the state")),
        }
    }
}

impl<M: DeterministicMap> DeterministicMap for PeriodicWrap<M> {
    fn forward(&self, s: &PhaseState) -> Result<PhaseState> {
        let d = self.direction(s)?;
        let mut next = if d + 1 < self.period {
            self.inner.forward(s)?
        } else {
            let mut cur = s.clone();
            for _ in 0..self.period - 1 {
                cur = self.inner.inverse(&cur)?;
            }
            cur
        };
        next.d = Some((d + 1) % self.period);
        Ok(next)
    }

    fn inverse(&self, s: &PhaseState) -> Result<PhaseState> {
        let d = self.direction(s)?;
        let mut prev = if d > 0 {
            self.inner.inverse(s)?
        } else {
            let mut cur = s.clone();
            for _ in 0..self.period - 1 {
                cur = self.inner.forward(&cur)?;
            }
            cur
        };
        prev.d = Some((d + self.period - 1) % self.period);
        Ok(prev)
    }

    fn step_log_jac(&self, s: &PhaseState) -> f64 {
        match self.direction(s) {
            Ok(d) if d + 1 < self.period => self.inner.step_log_jac(s),
            Ok(_) => match self.forward(s) {
                Ok(next) => next.log_jac - s.log_jac,
                Err(_) => f64::NAN,
            },
            Err(_) => f64::NAN,
        }
    }

    fn period(&self) -> Option<usize> {
        Some(self.period)
    }

    fn grad_evals(&self) -> u64 {
        self.inner.grad_evals()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{conformal_leapfrog, iterate, leapfrog};
    use crate::targets::make_banana;

    #[test]
    fn full_period_is_identity() {
        let wrapped = periodic_wrap(leapfrog(make_banana(), 0.1).unwrap(), 4).unwrap();
        let s = PhaseState::new(vec![0.4, -2.0], vec![0.3, 1.0]).with_direction(1);
        let back = iterate(&wrapped, &s, 4).unwrap();
        assert!(back.max_abs_diff(&s) < 1e-9);
        assert_eq!(back.d, Some(1));
    }

    #[test]
    fn wrap_step_jumps_back() {
        let inner = conformal_leapfrog(make_banana(), 0.1, 0.95).unwrap();
        let s = PhaseState::new(vec![0.4, -2.0], vec![0.3, 1.0]);
        let expected = iterate(&inner, &s, -4).unwrap();
        let wrapped = periodic_wrap(inner, 5).unwrap();
        let next = wrapped.forward(&s.clone().with_direction(4)).unwrap();
        assert_eq!(next.d, Some(0));
        assert!(next.max_abs_diff(&expected) < 1e-12);
        assert!((next.log_jac - expected.log_jac).abs() < 1e-12);
    }

    #[test]
    fn log_jacobian_cancels_around_a_period() {
        let wrapped = periodic_wrap(conformal_leapfrog(make_banana(), 0.1, 0.9).unwrap(), 6).unwrap();
        let s = PhaseState::new(vec![1.0, -3.0], vec![-0.5, 0.2]).with_direction(2);
        let total: f64 = (0..6)
            .scan(s.clone(), |cur, _| {
                let lj = wrapped.step_log_jac(cur);
                *cur = wrapped.forward(cur).unwrap();
                Some(lj)
            })
            .sum();
        assert!(total.abs() < 1e-12);
        assert!(iterate(&wrapped, &s, 6).unwrap().log_jac.abs() < 1e-12);
    }

    #[test]
    fn inverse_undoes_forward_everywhere() {
        let wrapped = periodic_wrap(leapfrog(make_banana(), 0.05).unwrap(), 3).unwrap();
        for d in 0..3 {
            let s = PhaseState::new(vec![0.1, 0.2], vec![0.3, 0.4]).with_direction(d);
            let back = wrapped.inverse(&wrapped.forward(&s).unwrap()).unwrap();
            assert!(back.max_abs_diff(&s) < 1e-12);
            assert_eq!(back.d, Some(d));
        }
    }

    #[test]
    fn argument_checks() {
        assert!(periodic_wrap(leapfrog(make_banana(), 0.1).unwrap(), 1).is_err());
        let wrapped = periodic_wrap(leapfrog(make_banana(), 0.1).unwrap(), 3).unwrap();
        assert!(wrapped.forward(&PhaseState::new(vec![0.0, 0.0], vec![0.0, 0.0])).is_err());
    }
}
