//! Seeded multi-chain experiment: shared ChEES adaptation, budgeted
//! sampling, per-chain metrics and error curves.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use orbital_core::adaptation::{adapt_chees_hmc, AdaptChain, AdaptState};
use orbital_core::diagnostics::{
    aggregate_errors, ess_1d, log_budget_grid, moment_errors, systematic_pick, ErrorCurvePoint, ErrorTracker,
    RunningMoments,
};
use orbital_core::kernels::{KernelConfig, KernelKind, Sampler, WeightedSample};
use orbital_core::targets::{
    generate_item_response, load_logistic_csv, make_banana, make_bimodal_mixture, make_ill_conditioned_gaussian,
    make_logistic_regression, synthetic_logistic_dataset, TargetModel,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{ExperimentConfig, TargetName};

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "ORBITAL_WORKERS";
pub const SCHEMA_LINE: &str = "# schema=1";
/// Stream reserved for the adaptation jitter draws.
const JITTER_STREAM: u64 = u64::MAX;
/// Chain `c` draws its trace resampling uniforms from stream `TRACE_STREAM_BASE + c`,
/// leaving the sampling stream untouched by diagnostics.
const TRACE_STREAM_BASE: u64 = 1 << 63;

pub const ACCOUNTING: &str = "one gradient evaluation per leapfrog step (the end-of-step gradient is cached \
     and reused as the next first half-kick) plus one per chain initialization; density-only evaluations are \
     counted separately";

pub fn worker_count() -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .with_context(|| format!("{WORKERS_ENV} must be a positive integer, got {v:?}"))?;
            if n == 0 {
                bail!("{WORKERS_ENV} must be at least 1");
            }
            Ok(n)
        }
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Rng for `stream` under `seed`: ChaCha8 keyed by the seed, with the
/// stream id selecting an independent keystream.
pub fn chain_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn build_target(cfg: &ExperimentConfig) -> Result<TargetModel> {
    Ok(match cfg.target {
        TargetName::Banana => make_banana(),
        TargetName::Gaussian => make_ill_conditioned_gaussian(cfg.dim)?,
        TargetName::Mixture => make_bimodal_mixture(),
        TargetName::ItemResponse => generate_item_response(cfg.data_seed).1,
        TargetName::Logistic => {
            let mut data = match &cfg.data {
                Some(path) => load_logistic_csv(path, cfg.data_header)?,
                None => synthetic_logistic_dataset(cfg.data_rows, cfg.data_features, cfg.data_seed)?,
            };
            data.standardize();
            make_logistic_regression(data)?
        }
    })
}

/// Per-chain results. Only the scalar fields go to metrics.csv.
#[derive(Debug, Clone)]
pub struct ChainSummary {
    pub chain: usize,
    pub steps: u64,
    pub samples: u64,
    pub min_ess: f64,
    pub mean_err: f64,
    pub var_err: f64,
    /// Sampling-phase gradient evaluations.
    pub grad_evals: u64,
    /// Adaptation plus sampling.
    pub grad_evals_gross: u64,
    pub density_evals: u64,
    pub failures: u64,
    pub truncated_steps: u64,
    /// Gradient evaluations of the costliest single step.
    pub max_step_grads: u64,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub ess: Vec<f64>,
    /// Equal-weight subsample (systematic resampling, then even thinning).
    pub thinned: Vec<Vec<f64>>,
    pub curve: Vec<Option<(f64, f64)>>,
    pub samples_kept: Vec<WeightedSample>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AdaptationSummary {
    pub iterations: usize,
    pub eps: f64,
    pub t_max: f64,
    /// Mean acceptance over the last tenth of adaptation.
    pub late_accept: f64,
    pub grad_evals: Vec<u64>,
    pub failures: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub config: ExperimentConfig,
    pub target: TargetModel,
    pub kernel: KernelConfig,
    pub adaptation: AdaptationSummary,
    /// Per-chain cap on the budget counter.
    pub budget: u64,
    pub chains: Vec<ChainSummary>,
    pub budgets: Vec<u64>,
    pub curve: Vec<ErrorCurvePoint>,
    pub warnings: Vec<String>,
}

impl RunOutcome {
    pub fn is_empty(&self) -> bool {
        self.chains.iter().all(|c| c.samples == 0)
    }
}

/// Runs `run_experiment` on a pool of `workers` threads.
pub fn run_with_workers(cfg: &ExperimentConfig, workers: usize) -> Result<RunOutcome> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .context("building worker pool")?;
    pool.install(|| run_experiment(cfg))
}

struct ChainPlan<'a> {
    cfg: &'a ExperimentConfig,
    target: &'a TargetModel,
    kernel: &'a KernelConfig,
    budgets: &'a [u64],
    /// Counter value at the start of sampling.
    offset: u64,
    /// Cap on sampling-phase gradient evaluations.
    limit: u64,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let target = build_target(cfg)?;
    let dim = target.dim();
    let mut warnings = Vec::new();

    let mut chains: Vec<AdaptChain<ChaCha8Rng>> = (0..cfg.chains)
        .map(|c| {
            let mut rng = chain_rng(cfg.seed, c as u64);
            let x: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            AdaptChain::new(x, rng)
        })
        .collect();
    let mut state = AdaptState::new(cfg.init_eps, cfg.init_t_max)?;
    state.target_accept = cfg.target_accept;
    state.chees_learning_rate = cfg.chees_learning_rate;
    state.t_max_bounds = (cfg.t_max_min, cfg.t_max_max);
    state.adapt_step_size = cfg.adapt_step_size;
    state.adapt_trajectory = cfg.adapt_trajectory;
    let (eps, t_max, late_accept) = if cfg.adapt_iters > 0 {
        let mut jitter = chain_rng(cfg.seed, JITTER_STREAM);
        let run = adapt_chees_hmc(&target, &mut chains, cfg.adapt_iters, state, &mut jitter)?;
        let tail = &run.accept_history[run.accept_history.len() * 9 / 10..];
        let late = tail.iter().sum::<f64>() / tail.len() as f64;
        (run.state.final_eps(), run.state.final_t_max(), late)
    } else {
        (cfg.init_eps, cfg.init_t_max, f64::NAN)
    };
    let adaptation = AdaptationSummary {
        iterations: cfg.adapt_iters,
        eps,
        t_max,
        late_accept,
        grad_evals: chains.iter().map(|c| c.grad_evals).collect(),
        failures: chains.iter().map(|c| c.failures).sum(),
    };
    log::info!("adapted eps = {eps:.4e}, t_max = {t_max:.4e}");

    let kernel = cfg.kernel_config(eps, t_max, dim);
    kernel.validate().context("adapted kernel")?;
    if kernel.kind == KernelKind::OrbitalPeriodic && kernel.direction_shift && kernel.period % 2 == 1 {
        warnings.push(format!(
            "direction shift needs an even period; T = {} falls back to uniform direction resampling",
            kernel.period
        ));
    }
    let step_cost = Sampler::new(target.clone(), kernel.clone())?.expected_step_cost();
    let offsets: Vec<u64> = adaptation
        .grad_evals
        .iter()
        .map(|&g| if cfg.budget_includes_adaptation { g } else { 0 })
        .collect();
    let max_offset = offsets.iter().copied().max().unwrap_or(0);
    let budget = cfg.budget.unwrap_or_else(|| {
        let hmc = Sampler::new(target.clone(), {
            let mut k = KernelConfig::new(KernelKind::Hmc, eps);
            k.trajectory_length = t_max;
            k
        })
        .map(|s| s.expected_step_cost())
        .unwrap_or(1.0);
        max_offset + (cfg.sample_iters as f64 * hmc).round() as u64
    });
    let first = offsets.iter().copied().min().unwrap_or(0) + 1 + step_cost.ceil() as u64;
    let budgets = log_budget_grid(first.min(budget), budget, cfg.curve_points);

    let plans: Vec<(AdaptChain<ChaCha8Rng>, u64)> = chains.into_iter().zip(offsets).collect();
    let results: Vec<Result<ChainSummary>> = plans
        .into_par_iter()
        .enumerate()
        .map(|(c, (chain, offset))| {
            let plan = ChainPlan {
                cfg,
                target: &target,
                kernel: &kernel,
                budgets: &budgets,
                offset,
                limit: budget.saturating_sub(offset),
            };
            run_chain(&plan, c, chain)
        })
        .collect();
    let chains = results.into_iter().collect::<Result<Vec<_>>>()?;

    let steps: u64 = chains.iter().map(|c| c.steps).sum();
    let failures: u64 = chains.iter().map(|c| c.failures).sum();
    if steps > 0 && failures as f64 > cfg.max_failure_rate * steps as f64 {
        let worst = chains.iter().max_by_key(|c| c.failures).expect("at least one chain");
        bail!(
            "numerical failures in {failures} of {steps} steps exceed the allowed rate {}; chain {} failed {} of {} \
             (eps = {eps:.3e}, kernel {})",
            cfg.max_failure_rate,
            worst.chain,
            worst.failures,
            worst.steps,
            cfg.kernel
        );
    }
    if chains.iter().all(|c| c.samples == 0) {
        warnings.push(format!(
            "budget {budget} is smaller than one {} step (about {step_cost:.0} gradient evaluations after {max_offset} \
             spent on adaptation); no samples were drawn",
            cfg.kernel
        ));
    }
    let truncated: u64 = chains.iter().map(|c| c.truncated_steps).sum();
    if truncated > 0 {
        warnings.push(format!("{truncated} contracting orbits hit the extension cap"));
    }
    let curve = if target.reference_mean().is_some() {
        let per_chain: Vec<Vec<Option<(f64, f64)>>> = chains.iter().map(|c| c.curve.clone()).collect();
        aggregate_errors(&per_chain, &budgets)
    } else {
        warnings.push(format!("target {} has no reference moments; errors are not reported", target.name()));
        Vec::new()
    };
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(RunOutcome {
        config: cfg.clone(),
        target,
        kernel,
        adaptation,
        budget,
        chains,
        budgets,
        curve,
        warnings,
    })
}

fn run_chain(plan: &ChainPlan<'_>, index: usize, chain: AdaptChain<ChaCha8Rng>) -> Result<ChainSummary> {
    let AdaptChain {
        state,
        mut rng,
        grad_evals: adapt_grads,
        density_evals: adapt_density,
        ..
    } = chain;
    let target = plan.target;
    let dim = target.dim();
    let sampler = Sampler::new(target.clone(), plan.kernel.clone())?;
    let reference = target.reference_mean().zip(target.reference_variance());
    let mut tracker = reference.map(|(m, v)| ErrorTracker::new(m, v, plan.budgets));
    let mut moments = RunningMoments::new(dim);
    let mut trace: Vec<Vec<f64>> = Vec::new();
    let mut trace_rng = chain_rng(plan.cfg.seed, TRACE_STREAM_BASE + index as u64);
    let mut kept = Vec::new();
    let (mut steps, mut samples, mut failures, mut truncated, mut density) = (0u64, 0u64, 0u64, 0u64, 0u64);
    let mut max_step = 0u64;

    let affordable = plan.limit as f64 >= 1.0 + sampler.expected_step_cost();
    if affordable {
        let mut s = sampler.init_state(state.into_x(), &mut rng)?;
        while sampler.grad_evals() < plan.limit {
            let before = sampler.grad_evals();
            let out = sampler.step(&s, &mut rng)?;
            max_step = max_step.max(sampler.grad_evals() - before);
            steps += 1;
            failures += u64::from(out.numerical_failure);
            truncated += u64::from(out.truncated);
            density += out.density_evals;
            let counter = plan.offset + sampler.grad_evals();
            if let Some(p) = systematic_pick(&out.samples, trace_rng.random::<f64>()) {
                trace.push(p.x.clone());
            }
            for mut w in out.samples {
                w.iteration = steps;
                w.gradient_evals_so_far = counter;
                moments.push(&w.x, w.weight);
                if let Some(t) = tracker.as_mut() {
                    t.push(&w);
                }
                samples += 1;
                if plan.cfg.samples {
                    kept.push(w);
                }
            }
            if steps >= 100 && failures as f64 > plan.cfg.max_failure_rate * steps as f64 {
                bail!(
                    "chain {index}: {failures} numerical failures in {steps} steps (last position {:?})",
                    out.next.x()
                );
            }
            s = out.next;
        }
    }

    let thinned = thin(&trace, plan.cfg.ess_points);
    let ess: Vec<f64> = if thinned.len() >= 10 {
        (0..dim)
            .map(|d| {
                let column: Vec<f64> = thinned.iter().map(|x| x[d]).collect();
                ess_1d(&column).unwrap_or(f64::NAN)
            })
            .collect()
    } else {
        vec![f64::NAN; dim]
    };
    let min_ess = ess.iter().copied().fold(f64::INFINITY, f64::min);
    let (mean, variance) = moments.moments().unwrap_or_else(|| (vec![f64::NAN; dim], vec![f64::NAN; dim]));
    let (mean_err, var_err) = match reference {
        Some((m, v)) if samples > 0 => moment_errors(&mean, &variance, m, v),
        _ => (f64::NAN, f64::NAN),
    };
    let grad_evals = sampler.grad_evals();
    Ok(ChainSummary {
        chain: index,
        steps,
        samples,
        min_ess: if min_ess.is_finite() { min_ess } else { f64::NAN },
        mean_err,
        var_err,
        grad_evals,
        grad_evals_gross: adapt_grads + grad_evals,
        density_evals: adapt_density + density,
        failures,
        truncated_steps: truncated,
        max_step_grads: max_step,
        mean,
        variance,
        ess,
        thinned,
        curve: tracker.map(|t| t.finish()).unwrap_or_default(),
        samples_kept: kept,
    })
}

/// `m` evenly spaced points of `trace` (all of it when shorter).
fn thin(trace: &[Vec<f64>], m: usize) -> Vec<Vec<f64>> {
    if trace.len() <= m {
        return trace.to_vec();
    }
    let n = trace.len() as f64;
    (0..m)
        .map(|j| trace[((j as f64 + 0.5) * n / m as f64) as usize].clone())
        .collect()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{SCHEMA_LINE}")?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out))
}

fn num(v: f64) -> String {
    format!("{v}")
}

pub fn write_metrics(outcome: &RunOutcome, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "chain",
        "steps",
        "samples",
        "min_ess",
        "mean_err",
        "var_err",
        "grad_evals",
        "grad_evals_gross",
        "density_evals",
        "failures",
        "truncated_steps",
    ])?;
    for c in &outcome.chains {
        w.write_record([
            c.chain.to_string(),
            c.steps.to_string(),
            c.samples.to_string(),
            num(c.min_ess),
            num(c.mean_err),
            num(c.var_err),
            c.grad_evals.to_string(),
            c.grad_evals_gross.to_string(),
            c.density_evals.to_string(),
            c.failures.to_string(),
            c.truncated_steps.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_error_curve(outcome: &RunOutcome, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "budget",
        "chains",
        "mean_err",
        "mean_err_q25",
        "mean_err_q75",
        "var_err",
        "var_err_q25",
        "var_err_q75",
    ])?;
    for p in &outcome.curve {
        w.write_record([
            p.budget.to_string(),
            p.chains.to_string(),
            num(p.mean_err),
            num(p.mean_err_q25),
            num(p.mean_err_q75),
            num(p.var_err),
            num(p.var_err_q25),
            num(p.var_err_q75),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_samples(outcome: &RunOutcome, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    let dim = outcome.target.dim();
    let mut header = vec!["chain".to_string(), "iteration".into(), "grad_evals".into(), "weight".into()];
    header.extend((0..dim).map(|d| format!("x{d}")));
    w.write_record(&header)?;
    for c in &outcome.chains {
        for s in &c.samples_kept {
            let mut row = vec![
                c.chain.to_string(),
                s.iteration.to_string(),
                s.gradient_evals_so_far.to_string(),
                num(s.weight),
            ];
            row.extend(s.x.iter().map(|v| num(*v)));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn run_json(outcome: &RunOutcome, workers: usize) -> serde_json::Value {
    let cfg = &outcome.config;
    let k = &outcome.kernel;
    json!({
        "schema": 1,
        "config": cfg,
        "config_keys": ExperimentConfig::known_keys(),
        "target": {
            "name": outcome.target.name(),
            "dim": outcome.target.dim(),
            "reference_mean": outcome.target.reference_mean(),
            "reference_variance": outcome.target.reference_variance(),
        },
        "seeds": {
            "master_seed": cfg.seed,
            "chain_rng": "ChaCha8 seeded from master_seed; chain c uses stream c for its start point, \
                          adaptation momenta and sampling",
            "adaptation_jitter_stream": JITTER_STREAM,
            "trace_stream_base": TRACE_STREAM_BASE,
        },
        "adaptation": outcome.adaptation,
        "kernel": {
            "kind": k.kind.as_str(),
            "eps": k.eps,
            "period": k.period,
            "beta": k.beta,
            "threshold": k.threshold,
            "max_extension": k.max_extension,
            "direction_shift": k.direction_shift,
            "trajectory_length": k.trajectory_length,
        },
        "budget": {
            "grad_evals_per_chain": outcome.budget,
            "includes_adaptation": cfg.budget_includes_adaptation,
            "rule": "steps are issued while the counter is below the budget; the last orbit is kept in full",
            "curve_budgets": outcome.budgets,
        },
        "accounting": {
            "gradient": ACCOUNTING,
            "grad_evals": "sampling phase only (net)",
            "grad_evals_gross": "adaptation plus sampling",
            "ess": "minimum over dimensions of Geyer ESS on an equal-weight subsample of ess_points: one \
                    systematic-resampling draw per kernel step, then even thinning",
            "errors": "absolute error of the weighted mean and variance, averaged over dimensions",
        },
        "totals": {
            "steps": outcome.chains.iter().map(|c| c.steps).sum::<u64>(),
            "samples": outcome.chains.iter().map(|c| c.samples).sum::<u64>(),
            "failures": outcome.chains.iter().map(|c| c.failures).sum::<u64>(),
        },
        "workers": workers,
        "warnings": outcome.warnings,
    })
}

/// Writes metrics.csv, error_curve.csv, run.json and, when enabled,
/// samples.csv into the configured output directory.
pub fn write_outputs(outcome: &RunOutcome, workers: usize) -> Result<()> {
    let dir = &outcome.config.out;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_metrics(outcome, &dir.join("metrics.csv"))?;
    write_error_curve(outcome, &dir.join("error_curve.csv"))?;
    if outcome.config.samples {
        write_samples(outcome, &dir.join("samples.csv"))?;
    }
    let text = serde_json::to_string_pretty(&run_json(outcome, workers))?;
    std::fs::write(dir.join("run.json"), text + "\n").with_context(|| format!("writing {}", dir.display()))?;
    Ok(())
}
