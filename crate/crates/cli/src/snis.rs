//! Deterministic versus stochastic self-normalized importance sampling on
//! the bimodal mixture with a `N(0, 2)` proposal.

use std::io::Write;

use anyhow::Result;
use orbital_core::dynamics::{weyl_map, Normal1d, PhaseState, SQRT2_FRACTION};
use orbital_core::kernels::{deterministic_snis, stochastic_snis, WeightedSample};
use orbital_core::targets::{make_bimodal_mixture, DiagonalGaussian, LogDensity};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::runner::{chain_rng, SCHEMA_LINE};

pub const PROPOSAL_VARIANCE: f64 = 2.0;
pub const DEFAULT_RUNS: usize = 200;
pub const DEFAULT_N_GRID: [usize; 7] = [10, 30, 100, 300, 1000, 3000, 10_000];

#[derive(Debug, Clone, PartialEq)]
pub struct SnisRow {
    pub n: usize,
    pub det_mse: f64,
    pub stoch_mse: f64,
    /// Standard errors of the two MSE estimates across runs.
    pub det_se: f64,
    pub stoch_se: f64,
}

fn estimate(samples: &[WeightedSample]) -> f64 {
    samples.iter().map(|s| s.weight * s.x[0]).sum()
}

/// Squared errors of the mean estimate, one pair per run. Run `r` draws
/// from its own stream, so results do not depend on scheduling.
pub fn snis_squared_errors(n: usize, runs: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    let target = make_bimodal_mixture();
    let truth = target.reference_mean().expect("mixture has reference moments")[0];
    let proposal = DiagonalGaussian::new(vec![PROPOSAL_VARIANCE])?;
    let map = weyl_map(Normal1d::new(0.0, PROPOSAL_VARIANCE)?, SQRT2_FRACTION);
    (0..runs)
        .into_par_iter()
        .map(|r| {
            let mut rng = chain_rng(seed, r as u64);
            let x0 = proposal.sample(&mut rng);
            let det = deterministic_snis(&target, &map, &PhaseState::position(x0), n)?;
            let sto = stochastic_snis(
                &target,
                |rng: &mut ChaCha8Rng| proposal.sample(rng),
                |x| proposal.log_density(x),
                n,
                &mut rng,
            )?;
            Ok(((estimate(&det) - truth).powi(2), (estimate(&sto) - truth).powi(2)))
        })
        .collect()
}

fn mean_and_se(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, f64::NAN);
    }
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// One row per `n`; each `n` gets its own seed so rows are independent.
pub fn snis_experiment(n_grid: &[usize], runs: usize, seed: u64) -> Result<Vec<SnisRow>> {
    n_grid
        .iter()
        .map(|&n| {
            let errs = snis_squared_errors(n, runs, seed ^ (n as u64).rotate_left(32))?;
            let (det_mse, det_se) = mean_and_se(errs.iter().map(|e| e.0));
            let (stoch_mse, stoch_se) = mean_and_se(errs.iter().map(|e| e.1));
            Ok(SnisRow {
                n,
                det_mse,
                stoch_mse,
                det_se,
                stoch_se,
            })
        })
        .collect()
}

pub fn write_snis_csv<W: Write>(rows: &[SnisRow], mut out: W) -> Result<()> {
    writeln!(out, "{SCHEMA_LINE}")?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["n", "det_mse", "stoch_mse", "det_se", "stoch_se"])?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.det_mse.to_string(),
            r.stoch_mse.to_string(),
            r.det_se.to_string(),
            r.stoch_se.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
