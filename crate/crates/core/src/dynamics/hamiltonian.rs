use std::sync::atomic::{AtomicU64, Ordering};

use super::{check_finite, DensityCache, DeterministicMap, PhaseState};
use crate::error::{Error, Result};
use crate::targets::TargetModel;

/// Velocity-Verlet step on `H(x, v) = -log p(x) + |v|^2 / 2`, with optional
/// friction `beta` applied to both half-kicks:
///
/// ```text
/// v'  = beta [v  + eps/2 grad log p(x)]
/// x'  = x + eps/2 (1/beta + beta) v'
/// v'' = beta [v' + eps/2 grad log p(x')]
/// ```
///
/// `beta = 1` is the ordinary leapfrog. Each step multiplies phase-space
/// volume by `beta^(2n)` with `n` the position dimension. The gradient at
/// the current position is cached on the state, so one step costs one
/// gradient evaluation.
pub struct HamiltonianMap {
    target: TargetModel,
    eps: f64,
    beta: f64,
    drift: f64,
    log_jac_per_step: f64,
    grad_evals: AtomicU64,
}

impl std::fmt::Debug for HamiltonianMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HamiltonianMap")
            .field("target", &self.target.name())
            .field("eps", &self.eps)
            .field("beta", &self.beta)
            .finish()
    }
}

pub fn leapfrog(target: TargetModel, eps: f64) -> Result<HamiltonianMap> {
    conformal_leapfrog(target, eps, 1.0)
}

pub fn conformal_leapfrog(target: TargetModel, eps: f64, beta: f64) -> Result<HamiltonianMap> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid(format!("step size must be positive, got {eps}")));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::invalid(format!("friction must lie in (0, 1], got {beta}")));
    }
    let n = target.dim() as f64;
    Ok(HamiltonianMap {
        drift: 0.5 * eps * (1.0 / beta + beta),
        log_jac_per_step: 2.0 * n * beta.ln(),
        target,
        eps,
        beta,
        grad_evals: AtomicU64::new(0),
    })
}

impl HamiltonianMap {
    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn target(&self) -> &TargetModel {
        &self.target
    }

    fn evaluate(&self, x: &[f64]) -> Result<DensityCache> {
        let mut grad = vec![0.0; x.len()];
        let log_p = self.target.log_density_and_grad(x, &mut grad);
        self.grad_evals.fetch_add(1, Ordering::Relaxed);
        if log_p.is_nan() || log_p == f64::INFINITY {
            return Err(Error::numerical("log density is not finite", x));
        }
        check_finite(&grad, "gradient", x)?;
        Ok(DensityCache { log_p, grad })
    }

    fn cache_of(&self, s: &PhaseState) -> Result<DensityCache> {
        match &s.cache {
            Some(c) => Ok(c.clone()),
            None => self.evaluate(&s.x),
        }
    }

    /// Evaluates and attaches the density cache if it is missing.
    pub fn prepare(&self, s: &mut PhaseState) -> Result<()> {
        if s.cache.is_none() {
            s.cache = Some(self.evaluate(&s.x)?);
        }
        Ok(())
    }
}

impl DeterministicMap for HamiltonianMap {
    fn forward(&self, s: &PhaseState) -> Result<PhaseState> {
        let h = 0.5 * self.eps;
        let start = self.cache_of(s)?;
        let v_half: Vec<f64> = s
            .v
            .iter()
            .zip(&start.grad)
            .map(|(v, g)| self.beta * (v + h * g))
            .collect();
        let x_new: Vec<f64> = s.x.iter().zip(&v_half).map(|(x, v)| x + self.drift * v).collect();
        check_finite(&x_new, "position", &x_new)?;
        let end = self.evaluate(&x_new)?;
        let v_new: Vec<f64> = v_half
            .iter()
            .zip(&end.grad)
            .map(|(v, g)| self.beta * (v + h * g))
            .collect();
        check_finite(&v_new, "momentum", &x_new)?;
        Ok(PhaseState {
            x: x_new,
            v: v_new,
            d: s.d,
            log_jac: s.log_jac + self.log_jac_per_step,
            cache: Some(end),
        })
    }

    fn inverse(&self, s: &PhaseState) -> Result<PhaseState> {
        let h = 0.5 * self.eps;
        let end = self.cache_of(s)?;
        let v_half: Vec<f64> = s.v.iter().zip(&end.grad).map(|(v, g)| v / self.beta - h * g).collect();
        let x_old: Vec<f64> = s.x.iter().zip(&v_half).map(|(x, v)| x - self.drift * v).collect();
        check_finite(&x_old, "position", &x_old)?;
        let start = self.evaluate(&x_old)?;
        let v_old: Vec<f64> = v_half.iter().zip(&start.grad).map(|(v, g)| v / self.beta - h * g).collect();
        check_finite(&v_old, "momentum", &x_old)?;
        Ok(PhaseState {
            x: x_old,
            v: v_old,
            d: s.d,
            log_jac: s.log_jac - self.log_jac_per_step,
            cache: Some(start),
        })
    }

    fn step_log_jac(&self, _s: &PhaseState) -> f64 {
        self.log_jac_per_step
    }

    fn inverse_step_log_jac(&self, _s: &PhaseState) -> f64 {
        -self.log_jac_per_step
    }

    fn grad_evals(&self) -> u64 {
        self.grad_evals.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::iterate;
    use crate::targets::{make_banana, DiagonalGaussian, LogDensity};

    fn std_normal_1d() -> TargetModel {
        TargetModel::new("n01", DiagonalGaussian::new(vec![1.0]).unwrap())
    }

    struct Flat(usize);
    impl LogDensity for Flat {
        fn dim(&self) -> usize {
            self.0
        }
        fn log_density(&self, _x: &[f64]) -> f64 {
            0.0
        }
        fn log_density_and_grad(&self, _x: &[f64], grad: &mut [f64]) -> f64 {
            grad.fill(0.0);
            0.0
        }
    }

    #[test]
    fn one_step_on_standard_normal() {
        // v' = 0 - 0.05 * 1 = -0.05; x' = 1 + 0.1 * v' = 0.995;
        // v'' = v' - 0.05 * 0.995 = -0.09975
        let map = leapfrog(std_normal_1d(), 0.1).unwrap();
        let s = map.forward(&PhaseState::new(vec![1.0], vec![0.0])).unwrap();
        assert!((s.x()[0] - 0.995).abs() < 1e-15);
        assert!((s.v[0] + 0.09975).abs() < 1e-15);
        assert_eq!(s.log_jac, 0.0);
    }

    #[test]
    fn free_flight_on_flat_density() {
        let map = leapfrog(TargetModel::new("flat", Flat(2)), 0.25).unwrap();
        let s = map.forward(&PhaseState::new(vec![1.0, -1.0], vec![2.0, 0.5])).unwrap();
        assert_eq!(s.x(), &[1.5, -0.875]);
        assert_eq!(s.v, vec![2.0, 0.5]);
    }

    #[test]
    fn reversible_on_banana() {
        let map = leapfrog(make_banana(), 0.1).unwrap();
        let s = PhaseState::new(vec![1.3, -2.0], vec![0.7, -0.4]);
        let back = map.inverse(&map.forward(&s).unwrap()).unwrap();
        assert!(back.max_abs_diff(&s) < 1e-12);
        assert_eq!(back.log_jac, 0.0);
    }

    #[test]
    fn unit_friction_is_bitwise_leapfrog() {
        let s = PhaseState::new(vec![0.3, 4.0], vec![-1.1, 0.2]);
        let a = leapfrog(make_banana(), 0.07).unwrap().forward(&s).unwrap();
        let b = conformal_leapfrog(make_banana(), 0.07, 1.0).unwrap().forward(&s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn conformal_log_jacobian() {
        let map = conformal_leapfrog(make_banana(), 0.1, 0.9).unwrap();
        let s = PhaseState::new(vec![0.0, 0.0], vec![1.0, 1.0]);
        assert!((map.step_log_jac(&s) - (-0.421442)).abs() < 1e-6);
        let s3 = iterate(&map, &s, 3).unwrap();
        assert_eq!(s3.log_jac, 3.0 * (4.0 * 0.9f64.ln()));
        assert!((s3.log_jac - 12.0 * 0.9f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn friction_contracts_to_the_mode() {
        let target = TargetModel::new("n2", DiagonalGaussian::new(vec![1.0, 2.0]).unwrap());
        let map = conformal_leapfrog(target.clone(), 0.1, 0.9).unwrap();
        let mut s = PhaseState::new(vec![0.2, 5.0], vec![1.0, -1.0]);
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let g0 = norm(&target.grad_log_density(s.x()));
        for _ in 0..500 {
            s = map.forward(&s).unwrap();
        }
        let g = norm(&target.grad_log_density(s.x()));
        assert!(g < 1e-4 && g < 1e-3 * g0, "{g}");
        assert!(norm(&s.v) < 1e-4);
    }

    #[test]
    fn one_gradient_per_cached_step() {
        let map = leapfrog(make_banana(), 0.1).unwrap();
        let mut s = PhaseState::new(vec![0.0, 0.0], vec![1.0, 0.0]);
        map.prepare(&mut s).unwrap();
        assert_eq!(map.grad_evals(), 1);
        let s = iterate(&map, &s, 10).unwrap();
        assert_eq!(map.grad_evals(), 11);
        let _ = iterate(&map, &s, -4).unwrap();
        assert_eq!(map.grad_evals(), 15);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(leapfrog(make_banana(), 0.0).is_err());
        assert!(conformal_leapfrog(make_banana(), 0.1, 1.5).is_err());
        assert!(conformal_leapfrog(make_banana(), 0.1, 0.0).is_err());
    }

    #[test]
    fn non_finite_gradient_is_reported() {
        struct Hole;
        impl LogDensity for Hole {
            fn dim(&self) -> usize {
                1
            }
            fn log_density(&self, x: &[f64]) -> f64 {
                -x[0].ln()
            }
            fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
                grad[0] = -1.0 / x[0];
                -x[0].ln()
            }
        }
        let map = leapfrog(TargetModel::new("hole", Hole), 1.0).unwrap();
        let err = map.forward(&PhaseState::new(vec![1.0], vec![-1.0])).unwrap_err();
        assert!(err.is_numerical_failure());
    }
}
