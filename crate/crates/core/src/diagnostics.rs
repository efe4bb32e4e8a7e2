//! Weighted estimators, effective sample size, subsampling and
//! error-versus-budget curves.
//!
//! Gradient accounting convention used throughout: one gradient per
//! leapfrog step (the end-of-step gradient is cached and reused as the next
//! step's first half-kick) plus one at chain initialization.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::kernels::{KernelKind, WeightedSample};

/// Samples and counters of one completed chain.
#[derive(Debug, Clone)]
pub struct ChainRecord {
    pub samples: Vec<WeightedSample>,
    pub gradient_evals: u64,
    pub density_evals: u64,
    pub kernel_kind: KernelKind,
    pub seed: u64,
}

fn total_weight(samples: &[WeightedSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("no samples"));
    }
    if samples.iter().any(|s| !(s.weight >= 0.0) || !s.weight.is_finite()) {
        return Err(Error::invalid("weights must be finite and non-negative"));
    }
    let total: f64 = samples.iter().map(|s| s.weight).sum();
    if total == 0.0 {
        return Err(Error::invalid("all weights are zero"));
    }
    Ok(total)
}

/// `sum w_i x_i / sum w_i`, per dimension.
pub fn weighted_mean(samples: &[WeightedSample]) -> Result<Vec<f64>> {
    let total = total_weight(samples)?;
    let dim = samples[0].x.len();
    let mut mean = vec![0.0; dim];
    for s in samples {
        for (m, x) in mean.iter_mut().zip(&s.x) {
            *m += s.weight * x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= total);
    Ok(mean)
}

/// Weighted second central moment `sum w_i (x_i - mean)^2 / sum w_i`.
pub fn weighted_variance(samples: &[WeightedSample]) -> Result<Vec<f64>> {
    let total = total_weight(samples)?;
    let mean = weighted_mean(samples)?;
    let mut var = vec![0.0; mean.len()];
    for s in samples {
        for ((v, x), m) in var.iter_mut().zip(&s.x).zip(&mean) {
            *v += s.weight * (x - m) * (x - m);
        }
    }
    var.iter_mut().for_each(|v| *v /= total);
    Ok(var)
}

/// Biased autocovariance at every lag via zero-padded FFT.
fn autocovariance(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x
        .iter()
        .map(|v| Complex::new(v - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    buf[..n].iter().map(|c| c.re / (size as f64 * n as f64)).collect()
}

/// Effective sample size of a scalar chain: Geyer's initial positive and
/// monotone sequence estimator, with the integrated autocorrelation time
/// bounded below by `1 / log10(n)`. A constant chain has ESS 1.
pub fn ess_1d(x: &[f64]) -> Result<f64> {
    let n = x.len();
    if n < 10 {
        return Err(Error::invalid(format!("ESS needs at least 10 samples, got {n}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("chain contains non-finite values"));
    }
    let acov = autocovariance(x);
    if !(acov[0] > 0.0) {
        log::warn!("constant chain; ESS set to 1");
        return Ok(1.0);
    }
    let rho = |k: usize| acov[k] / acov[0];
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut t = 0;
    while 2 * t + 1 < n {
        let pair = rho(2 * t) + rho(2 * t + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        sum += pair;
        prev = pair;
        t += 1;
    }
    let tau = (2.0 * sum - 1.0).max(1.0 / (n as f64).log10());
    Ok(n as f64 / tau)
}

/// Minimum ESS across dimensions of an equal-weight chain.
pub fn ess(chain: &[Vec<f64>]) -> Result<f64> {
    let Some(first) = chain.first() else {
        return Err(Error::invalid("empty chain"));
    };
    let dim = first.len();
    let mut min = f64::INFINITY;
    for d in 0..dim {
        let column: Vec<f64> = chain.iter().map(|x| x[d]).collect();
        min = min.min(ess_1d(&column)?);
    }
    Ok(min)
}

/// Equal-weight subsample of `m` points in chain order: systematic
/// resampling at the cumulative-weight positions `(j + 1/2) / m`.
pub fn subsample(samples: &[WeightedSample], m: usize) -> Result<Vec<Vec<f64>>> {
    if m == 0 || m > samples.len() {
        return Err(Error::invalid(format!(
            "cannot subsample {m} points from a chain of {}",
            samples.len()
        )));
    }
    let total = total_weight(samples)?;
    let mut out = Vec::with_capacity(m);
    let mut cumulative = 0.0;
    let mut i = 0;
    for j in 0..m {
        let target = (j as f64 + 0.5) / m as f64 * total;
        while i + 1 < samples.len() && cumulative + samples[i].weight <= target {
            cumulative += samples[i].weight;
            i += 1;
        }
        out.push(samples[i].x.clone());
    }
    Ok(out)
}

/// One row of an error curve: at `budget` gradient evaluations, the mean
/// and 0.25/0.75 quantiles across chains of the dimension-averaged absolute
/// error of the running weighted mean and variance.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCurvePoint {
    pub budget: u64,
    pub chains: usize,
    pub mean_err: f64,
    pub mean_err_q25: f64,
    pub mean_err_q75: f64,
    pub var_err: f64,
    pub var_err_q25: f64,
    pub var_err_q75: f64,
}

/// Linear-interpolation quantile of unsorted data.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Running weighted first and second moments.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningMoments {
    w_sum: f64,
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl RunningMoments {
    pub fn new(dim: usize) -> Self {
        RunningMoments {
            w_sum: 0.0,
            s1: vec![0.0; dim],
            s2: vec![0.0; dim],
        }
    }

    pub fn push(&mut self, x: &[f64], weight: f64) {
        self.w_sum += weight;
        for ((a, b), v) in self.s1.iter_mut().zip(self.s2.iter_mut()).zip(x) {
            *a += weight * v;
            *b += weight * v * v;
        }
    }

    pub fn total_weight(&self) -> f64 {
        self.w_sum
    }

    /// `(mean, variance)`, or `None` before any positive weight arrived.
    pub fn moments(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        if !(self.w_sum > 0.0) {
            return None;
        }
        let mean: Vec<f64> = self.s1.iter().map(|a| a / self.w_sum).collect();
        let var = self
            .s2
            .iter()
            .zip(&mean)
            .map(|(b, m)| (b / self.w_sum - m * m).max(0.0))
            .collect();
        Some((mean, var))
    }
}

/// Dimension-averaged absolute errors of a mean and variance estimate.
pub fn moment_errors(mean: &[f64], var: &[f64], reference_mean: &[f64], reference_variance: &[f64]) -> (f64, f64) {
    let dim = reference_mean.len() as f64;
    let me: f64 = mean.iter().zip(reference_mean).map(|(a, b)| (a - b).abs()).sum();
    let ve: f64 = var.iter().zip(reference_variance).map(|(a, b)| (a - b).abs()).sum();
    (me / dim, ve / dim)
}

/// Streaming form of [`chain_errors`]; samples must arrive in counter
/// order.
#[derive(Debug, Clone)]
pub struct ErrorTracker {
    reference_mean: Vec<f64>,
    reference_variance: Vec<f64>,
    budgets: Vec<u64>,
    moments: RunningMoments,
    errors: Vec<Option<(f64, f64)>>,
}

impl ErrorTracker {
    pub fn new(reference_mean: &[f64], reference_variance: &[f64], budgets: &[u64]) -> Self {
        ErrorTracker {
            reference_mean: reference_mean.to_vec(),
            reference_variance: reference_variance.to_vec(),
            budgets: budgets.to_vec(),
            moments: RunningMoments::new(reference_mean.len()),
            errors: Vec::with_capacity(budgets.len()),
        }
    }

    pub fn push(&mut self, s: &WeightedSample) {
        while self.errors.len() < self.budgets.len() && self.budgets[self.errors.len()] < s.gradient_evals_so_far {
            let e = self.current();
            self.errors.push(e);
        }
        self.moments.push(&s.x, s.weight);
    }

    /// Errors of the estimate from every sample pushed so far.
    pub fn current(&self) -> Option<(f64, f64)> {
        self.moments
            .moments()
            .map(|(m, v)| moment_errors(&m, &v, &self.reference_mean, &self.reference_variance))
    }

    pub fn moments(&self) -> &RunningMoments {
        &self.moments
    }

    /// Errors at every budget; budgets beyond the last sample see the
    /// final estimate.
    pub fn finish(mut self) -> Vec<Option<(f64, f64)>> {
        while self.errors.len() < self.budgets.len() {
            let e = self.current();
            self.errors.push(e);
        }
        self.errors
    }
}

/// Per-chain `(mean error, variance error)` at each budget, using samples
/// whose `gradient_evals_so_far` is within the budget. `None` where a
/// chain has no sample yet.
pub fn chain_errors(
    samples: &[WeightedSample],
    reference_mean: &[f64],
    reference_variance: &[f64],
    budgets: &[u64],
) -> Vec<Option<(f64, f64)>> {
    let mut tracker = ErrorTracker::new(reference_mean, reference_variance, budgets);
    for s in samples {
        tracker.push(s);
    }
    tracker.finish()
}

/// Point of `samples` where the cumulative weight first exceeds
/// `u * total`: one draw of systematic resampling.
pub fn systematic_pick(samples: &[WeightedSample], u: f64) -> Option<&WeightedSample> {
    let total: f64 = samples.iter().map(|s| s.weight).sum();
    if !(total > 0.0) {
        return None;
    }
    let target = u * total;
    let mut cumulative = 0.0;
    for s in samples {
        cumulative += s.weight;
        if cumulative > target {
            return Some(s);
        }
    }
    samples.last()
}

/// Aggregates per-chain error rows (as returned by [`chain_errors`]) into
/// a curve.
pub fn aggregate_errors(per_chain: &[Vec<Option<(f64, f64)>>], budgets: &[u64]) -> Vec<ErrorCurvePoint> {
    budgets
        .iter()
        .enumerate()
        .map(|(b, &budget)| {
            let (me, ve): (Vec<f64>, Vec<f64>) = per_chain.iter().filter_map(|c| c[b]).unzip();
            let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
            ErrorCurvePoint {
                budget,
                chains: me.len(),
                mean_err: mean(&me),
                mean_err_q25: quantile(&me, 0.25),
                mean_err_q75: quantile(&me, 0.75),
                var_err: mean(&ve),
                var_err_q25: quantile(&ve, 0.25),
                var_err_q75: quantile(&ve, 0.75),
            }
        })
        .collect()
}

/// Error-versus-budget curve aggregated across chains. Budgets must be
/// increasing and samples within each chain ordered by gradient count.
pub fn error_curve(
    chains: &[ChainRecord],
    reference_mean: &[f64],
    reference_variance: &[f64],
    budgets: &[u64],
) -> Result<Vec<ErrorCurvePoint>> {
    if reference_mean.len() != reference_variance.len() {
        return Err(Error::invalid("reference mean and variance differ in length"));
    }
    if budgets.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("budgets must be strictly increasing"));
    }
    for c in chains {
        if c.samples.iter().any(|s| s.x.len() != reference_mean.len()) {
            return Err(Error::invalid("sample dimension differs from the reference"));
        }
    }
    let per_chain: Vec<Vec<Option<(f64, f64)>>> = chains
        .iter()
        .map(|c| chain_errors(&c.samples, reference_mean, reference_variance, budgets))
        .collect();
    Ok(aggregate_errors(&per_chain, budgets))
}

/// `n` budgets spaced evenly in log scale from `lo` to `hi`, deduplicated.
pub fn log_budget_grid(lo: u64, hi: u64, n: usize) -> Vec<u64> {
    if n <= 1 || lo >= hi {
        return vec![hi.max(lo)];
    }
    let (a, b) = ((lo.max(1)) as f64, hi as f64);
    let mut grid: Vec<u64> = (0..n)
        .map(|i| (a * (b / a).powf(i as f64 / (n - 1) as f64)).round() as u64)
        .collect();
    grid.dedup();
    grid
}
