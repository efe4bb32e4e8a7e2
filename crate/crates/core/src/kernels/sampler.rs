use rand::Rng;

use super::diffusing::tests_on_orbit;
use super::{
    hmc_step, linear_combination_step, orbital_contracting_step, orbital_periodic_step, recycled_hmc_step,
    resample_momentum, CChoice, ContractingOptions, DirectionUpdate, KernelConfig, KernelKind, Orbit, StepOutput,
    WeightedSample,
};
use crate::dynamics::{conformal_leapfrog, leapfrog, periodic_wrap, DeterministicMap, HamiltonianMap, PeriodicWrap, PhaseState};
use crate::error::Result;
use crate::targets::TargetModel;

enum Engine {
    Plain(HamiltonianMap),
    Periodic(PeriodicWrap<HamiltonianMap>),
}

/// A configured Hamiltonian kernel bound to one target. Each chain owns its
/// own `Sampler` so gradient counts stay per chain.
pub struct Sampler {
    target: TargetModel,
    config: KernelConfig,
    engine: Engine,
    lincomb_weights: Vec<f64>,
}

impl Sampler {
    pub fn new(target: TargetModel, config: KernelConfig) -> Result<Self> {
        config.validate()?;
        let engine = match config.kind {
            KernelKind::Hmc | KernelKind::RecycledHmc => Engine::Plain(leapfrog(target.clone(), config.eps)?),
            KernelKind::OrbitalContracting => {
                Engine::Plain(conformal_leapfrog(target.clone(), config.eps, config.beta)?)
            }
            KernelKind::OrbitalPeriodic | KernelKind::LinearCombination | KernelKind::Diffusing => {
                Engine::Periodic(periodic_wrap(leapfrog(target.clone(), config.eps)?, config.period)?)
            }
        };
        let lincomb_weights = config.resolved_lincomb_weights();
        Ok(Sampler {
            target,
            config,
            engine,
            lincomb_weights,
        })
    }

    pub fn config(&self) -> &KernelConfig {
        &self.config
    }

    pub fn target(&self) -> &TargetModel {
        &self.target
    }

    pub fn grad_evals(&self) -> u64 {
        match &self.engine {
            Engine::Plain(m) => m.grad_evals(),
            Engine::Periodic(m) => m.grad_evals(),
        }
    }

    /// Chain state at `x` with zero momentum and, for periodic kernels, a
    /// uniformly drawn direction. The density cache is filled (one
    /// gradient evaluation).
    pub fn init_state<R: Rng + ?Sized>(&self, x: Vec<f64>, rng: &mut R) -> Result<PhaseState> {
        let dim = x.len();
        let mut s = PhaseState::new(x, vec![0.0; dim]);
        match &self.engine {
            Engine::Plain(m) => m.prepare(&mut s)?,
            Engine::Periodic(m) => {
                s.d = Some(rng.random_range(0..self.config.period));
                m.inner().prepare(&mut s)?;
            }
        }
        Ok(s)
    }

    /// Expected gradient evaluations per step, used for budget planning.
    pub fn expected_step_cost(&self) -> f64 {
        match self.config.kind {
            KernelKind::Hmc | KernelKind::RecycledHmc => {
                (0.5 * self.config.trajectory_length / self.config.eps).max(1.0)
            }
            KernelKind::OrbitalPeriodic | KernelKind::LinearCombination | KernelKind::Diffusing => {
                (self.config.period - 1) as f64
            }
            KernelKind::OrbitalContracting => 2.0,
        }
    }

    fn jittered_steps<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let t = rng.random::<f64>() * self.config.trajectory_length;
        ((t / self.config.eps).ceil() as usize).max(1)
    }

    pub fn step<R: Rng + ?Sized>(&self, s: &PhaseState, rng: &mut R) -> Result<StepOutput> {
        let target = &self.target;
        match (&self.engine, self.config.kind) {
            (Engine::Plain(map), KernelKind::Hmc) => {
                let steps = self.jittered_steps(rng);
                hmc_step(target, map, s, steps, rng)
            }
            (Engine::Plain(map), KernelKind::RecycledHmc) => {
                let steps = self.jittered_steps(rng);
                recycled_hmc_step(target, map, s, steps, rng)
            }
            (Engine::Plain(map), KernelKind::OrbitalContracting) => {
                let options = ContractingOptions {
                    threshold: self.config.threshold,
                    max_extension: self.config.max_extension,
                };
                orbital_contracting_step(target, map, s, options, rng)
            }
            (Engine::Periodic(map), KernelKind::OrbitalPeriodic) => {
                let update = if self.config.direction_shift {
                    DirectionUpdate::ShiftHalf
                } else {
                    DirectionUpdate::Keep
                };
                orbital_periodic_step(target, map, s, update, rng)
            }
            (Engine::Periodic(map), KernelKind::LinearCombination) => {
                linear_combination_step(target, map, s, &self.lincomb_weights, rng)
            }
            (Engine::Periodic(map), KernelKind::Diffusing) => self.diffusing_periodic(map, s, rng),
            _ => unreachable!("engine matches kind by construction"),
        }
    }

    /// Diffusing kernel on the wrapped leapfrog with momentum refresh. The
    /// orbit is periodic, so `c` is exact over one period.
    fn diffusing_periodic<R: Rng + ?Sized>(
        &self,
        map: &PeriodicWrap<HamiltonianMap>,
        s: &PhaseState,
        rng: &mut R,
    ) -> Result<StepOutput> {
        let mut start = s.clone();
        resample_momentum(&mut start, rng);
        let orbit = match Orbit::build_periodic(&self.target, map, &start) {
            Ok(o) => o,
            Err(e) if e.is_numerical_failure() => return Ok(StepOutput::stay(start, true)),
            Err(e) => return Err(e),
        };
        let t = self.config.period as i64;
        let tests = tests_on_orbit(&orbit, CChoice::HalfInf, (0, t - 1))?;
        let u: f64 = rng.random();
        let index = if u < tests.g_plus {
            1
        } else if u < tests.g_plus + tests.g_minus {
            -1
        } else {
            0
        };
        let mut next = orbit.state(index).expect("periodic orbit").clone();
        next.log_jac = 0.0;
        Ok(StepOutput {
            samples: vec![WeightedSample::new(next.x().to_vec(), 1.0)],
            next,
            accept_prob: tests.g_plus + tests.g_minus,
            density_evals: orbit.density_evals(),
            numerical_failure: false,
            truncated: false,
            tail_bound: 0.0,
        })
    }
}
