use super::{DeterministicMap, PhaseState};
use crate::error::Result;

/// Exact flow of `H = |x|^2/2 + |v|^2/2` for time `tau`: a rotation of
/// every `(x_i, v_i)` plane. With `tau = 2 pi / T` every orbit has period `T`.
#[derive(Debug, Clone, Copy)]
pub struct ExactRotation {
    cos: f64,
    sin: f64,
}

pub fn exact_rotation(tau: f64) -> ExactRotation {
    let (sin, cos) = tau.sin_cos();
    ExactRotation { cos, sin }
}

impl ExactRotation {
    fn rotate(&self, s: &PhaseState, sin: f64) -> PhaseState {
        let (x, v): (Vec<f64>, Vec<f64>) = s
            .x()
            .iter()
            .zip(&s.v)
            .map(|(x, v)| (x * self.cos + v * sin, -x * sin + v * self.cos))
            .unzip();
        let mut out = PhaseState::new(x, v);
        out.d = s.d;
        out.log_jac = s.log_jac;
        out
    }
}

impl DeterministicMap for ExactRotation {
    fn forward(&self, s: &PhaseState) -> Result<PhaseState> {
        Ok(self.rotate(s, self.sin))
    }

    fn inverse(&self, s: &PhaseState) -> Result<PhaseState> {
        Ok(self.rotate(s, -self.sin))
    }

    fn step_log_jac(&self, _s: &PhaseState) -> f64 {
        0.0
    }

    fn inverse_step_log_jac(&self, _s: &PhaseState) -> f64 {
        0.0
    }
}
