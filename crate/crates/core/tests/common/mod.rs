#![allow(dead_code)]

use orbital_core::dynamics::{DeterministicMap, PhaseState};
use orbital_core::targets::{LogDensity, TargetModel};
use orbital_core::Result;

/// `x -> x + delta` on the real line (unit Jacobian). Ignores momentum.
pub struct Shift(pub f64);

impl DeterministicMap for Shift {
    fn forward(&self, s: &PhaseState) -> Result<PhaseState> {
        let mut out = PhaseState::new(s.x().iter().map(|x| x + self.0).collect(), s.v.clone());
        out.d = s.d;
        out.log_jac = s.log_jac;
        Ok(out)
    }
    fn inverse(&self, s: &PhaseState) -> Result<PhaseState> {
        let mut out = PhaseState::new(s.x().iter().map(|x| x - self.0).collect(), s.v.clone());
        out.d = s.d;
        out.log_jac = s.log_jac;
        Ok(out)
    }
    fn step_log_jac(&self, _s: &PhaseState) -> f64 {
        0.0
    }
}

/// `i -> i + 1 mod n` on the lattice `{0, .., n-1}` embedded in the line.
pub struct Cycle(pub usize);

impl DeterministicMap for Cycle {
    fn forward(&self, s: &PhaseState) -> Result<PhaseState> {
        let i = s.x()[0].round() as usize;
        let mut out = PhaseState::new(vec![((i + 1) % self.0) as f64], s.v.clone());
        out.d = s.d;
        out.log_jac = s.log_jac;
        Ok(out)
    }
    fn inverse(&self, s: &PhaseState) -> Result<PhaseState> {
        let i = s.x()[0].round() as usize;
        let mut out = PhaseState::new(vec![((i + self.0 - 1) % self.0) as f64], s.v.clone());
        out.d = s.d;
        out.log_jac = s.log_jac;
        Ok(out)
    }
    fn step_log_jac(&self, _s: &PhaseState) -> f64 {
        0.0
    }
    fn period(&self) -> Option<usize> {
        Some(self.0)
    }
}

/// Density given by a table on integer points (nearest integer), with a
/// floor value elsewhere.
pub struct Table {
    pub values: Vec<f64>,
    pub floor_log: f64,
}

impl LogDensity for Table {
    fn dim(&self) -> usize {
        1
    }
    fn log_density(&self, x: &[f64]) -> f64 {
        let r = x[0].round();
        if r >= 0.0 && (r as usize) < self.values.len() {
            self.values[r as usize].ln()
        } else {
            self.floor_log
        }
    }
    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        grad[0] = 0.0;
        self.log_density(x)
    }
}

pub fn table_target(values: &[f64]) -> TargetModel {
    TargetModel::new(
        "table",
        Table {
            values: values.to_vec(),
            floor_log: f64::NEG_INFINITY,
        },
    )
}

pub struct Flat(pub usize);

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

pub fn std_normal(dim: usize) -> TargetModel {
    TargetModel::new(
        "std_normal",
        orbital_core::targets::DiagonalGaussian::new(vec![1.0; dim]).unwrap(),
    )
}

pub fn normal_cdf(x: f64, mean: f64, variance: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::new(mean, variance.sqrt()).unwrap().cdf(x)
}

/// Kolmogorov-Smirnov statistic of equally weighted samples against `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value of the one-sample KS statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}
