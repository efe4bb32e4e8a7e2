//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Runs as a plain binary (`harness = false`) so the lines
//! are always printed.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use orbital_cli::config::ExperimentConfig;
use orbital_cli::runner::run_experiment;
use orbital_cli::snis::snis_squared_errors;
use orbital_cli::verify::{run_suite, Suite, SuiteReport, ORBITS_PER_SIZE, ORBIT_SIZES};
use orbital_core::dynamics::{conformal_leapfrog, leapfrog, periodic_wrap, DeterministicMap, PhaseState};
use orbital_core::kernels::{escaping_test, joint_log_density, KernelKind};
use orbital_core::targets::{
    directional_gradient_check, generate_item_response, gradient_check, make_banana, make_ill_conditioned_gaussian,
    make_logistic_regression, synthetic_logistic_dataset, TargetModel,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

type Verdict = Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Verdict,
}

fn checks_pass(report: &SuiteReport, names: &[&str]) -> Verdict {
    let mut parts = Vec::new();
    let mut ok = true;
    for name in names {
        let c = report.check(name).ok_or_else(|| format!("missing check {name}"))?;
        ok &= c.passed;
        parts.push(format!("{name}={:.2e}", c.value));
    }
    if ok {
        Ok(parts.join(", "))
    } else {
        Err(parts.join(", "))
    }
}

fn invariance() -> Verdict {
    let report = run_suite(Suite::Invariance, 2024).map_err(|e| e.to_string())?;
    let orbits = ORBIT_SIZES.len() * ORBITS_PER_SIZE;
    if orbits < 20 {
        return Err(format!("only {orbits} orbits"));
    }
    let worst = report.checks.iter().map(|c| c.value).fold(0.0, f64::max);
    let kinds = report.checks.len();
    let summary = format!("{orbits} orbits, {kinds} kernel families, max residual {worst:.2e}");
    if report.passed && kinds == 7 {
        Ok(summary)
    } else {
        Err(summary)
    }
}

fn mhg_reduction() -> Verdict {
    let target = make_banana();
    let plain = periodic_wrap(leapfrog(target.clone(), 0.4).unwrap(), 2).unwrap();
    let damped = periodic_wrap(conformal_leapfrog(target.clone(), 0.4, 0.9).unwrap(), 2).unwrap();
    let maps: [&dyn DeterministicMap; 2] = [&plain, &damped];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let trials = 10_000;
    for trial in 0..trials {
        let map = maps[trial % 2];
        let x = vec![rng.random_range(-8.0..8.0), rng.random_range(-10.0..4.0)];
        let v = vec![rng.sample(StandardNormal), rng.sample(StandardNormal)];
        let s = PhaseState::new(x, v).with_direction(rng.random_range(0..2));
        let g = escaping_test(&target, map, &s, (0, 1));
        let image = map.forward(&s).map_err(|e| e.to_string())?;
        let (lw0, _) = joint_log_density(&target, &s);
        let (lw1, _) = joint_log_density(&target, &image);
        let mhg = (lw1 + image.log_jac - lw0).exp().min(1.0);
        if g.to_bits() != mhg.to_bits() {
            return Err(format!("trial {trial}: test {g:e} vs MHG {mhg:e}"));
        }
    }
    Ok(format!("{trials} inputs bitwise equal (half with non-unit Jacobian)"))
}

fn reversibility() -> Verdict {
    let report = run_suite(Suite::Reversibility, 2024).map_err(|e| e.to_string())?;
    checks_pass(
        &report,
        &[
            "escaping_involution",
            "diffusing_half_inf",
            "diffusing_optimal",
            "linear_combination_symmetric",
            "escaping_three_cycle",
        ],
    )
}

fn weight_convergence() -> Verdict {
    let report = run_suite(Suite::Convergence, 0).map_err(|e| e.to_string())?;
    checks_pass(
        &report,
        &[
            "time_average_three_orbit",
            "aperiodic_cumulative_sums_constant",
            "aperiodic_time_average_constant",
            "aperiodic_cumulative_sums_cyclic",
            "aperiodic_time_average_cyclic",
        ],
    )
}

fn diffusing_convergence() -> Verdict {
    let report = run_suite(Suite::Convergence, 0).map_err(|e| e.to_string())?;
    checks_pass(&report, &["diffusing_lattice_half_inf", "diffusing_lattice_optimal"])
}

fn escape_time() -> Verdict {
    let report = run_suite(Suite::EscapeTime, 2024).map_err(|e| e.to_string())?;
    checks_pass(
        &report,
        &[
            "harmonic_standard_errors",
            "harmonic_prediction",
            "constant_standard_errors",
            "mixed_standard_errors",
        ],
    )
}

fn deterministic_snis() -> Verdict {
    let replications = 20;
    let mut wins = 0;
    let mut ratios = Vec::new();
    for k in 0..replications {
        let errs = snis_squared_errors(10_000, 200, 1000 + k).map_err(|e| e.to_string())?;
        let det: f64 = errs.iter().map(|e| e.0).sum();
        let sto: f64 = errs.iter().map(|e| e.1).sum();
        wins += u32::from(det <= sto);
        ratios.push(det / sto);
    }
    let worst = ratios.iter().copied().fold(0.0, f64::max);
    let msg = format!("deterministic <= stochastic in {wins}/{replications}, worst mse ratio {worst:.3}");
    if wins * 10 >= replications as u32 * 9 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn banana_config(kernel: KernelKind, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        kernel,
        chains: 10,
        budget: Some(100_000),
        seed,
        ..ExperimentConfig::default()
    }
}

/// Kolmogorov-Smirnov distance between `xs` and `cdf`.
fn ks_distance(xs: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    })
}

fn end_to_end() -> Verdict {
    let marginal = Normal::new(0.0, 10f64.sqrt()).unwrap();
    let mut lines = Vec::new();
    let mut ok = true;
    for (label, kernel, period) in [
        ("orbital", KernelKind::OrbitalPeriodic, Some(20)),
        ("opt", KernelKind::OrbitalContracting, None),
    ] {
        let mut cfg = banana_config(kernel, 8);
        cfg.period = period;
        cfg.threshold = 1e3;
        let out = run_experiment(&cfg).map_err(|e| e.to_string())?;
        let c = out.chains.len() as f64;
        let estimate = out.chains.iter().map(|ch| ch.mean[0]).sum::<f64>() / c;
        let se = out
            .chains
            .iter()
            .map(|ch| ch.variance[0] / ch.ess[0])
            .sum::<f64>()
            .sqrt()
            / c;
        let mut xs: Vec<f64> = out.chains.iter().flat_map(|ch| ch.thinned.iter().map(|x| x[0])).collect();
        let n_eff = out.chains.iter().map(|ch| ch.ess[0]).sum::<f64>().min(xs.len() as f64);
        let d = ks_distance(&mut xs, |x| marginal.cdf(x));
        let critical = 1.6276 / n_eff.sqrt();
        let z = estimate.abs() / se;
        ok &= z <= 3.0 && d <= critical;
        lines.push(format!(
            "{label}: E[x1] = {estimate:.4} ({z:.2} SE), KS {d:.4} vs {critical:.4} at n_eff {n_eff:.0}, beta {:.4}",
            out.kernel.beta
        ));
    }
    if ok {
        Ok(lines.join("; "))
    } else {
        Err(lines.join("; "))
    }
}

fn mean_error(cfg: &ExperimentConfig) -> Result<f64, String> {
    let out = run_experiment(cfg).map_err(|e| e.to_string())?;
    Ok(out.chains.iter().map(|c| c.mean_err).sum::<f64>() / out.chains.len() as f64)
}

fn directional() -> Verdict {
    let seeds = 1..=10u64;
    let (mut banana_wins, mut gauss_wins) = (0, 0);
    for seed in seeds.clone() {
        let opt = mean_error(&banana_config(KernelKind::OrbitalContracting, seed))?;
        let chees = mean_error(&banana_config(KernelKind::Hmc, seed))?;
        banana_wins += u32::from(opt <= chees);

        let mut cfg = banana_config(KernelKind::OrbitalPeriodic, seed);
        cfg.target = orbital_cli::TargetName::Gaussian;
        cfg.dim = 50;
        let orbital = mean_error(&cfg)?;
        cfg.kernel = KernelKind::OrbitalContracting;
        let opt = mean_error(&cfg)?;
        gauss_wins += u32::from(orbital <= opt);
    }
    let n = seeds.count();
    let msg = format!("banana: Opt-HMC <= ChEES-HMC in {banana_wins}/{n}; gaussian: Orbital-HMC <= Opt-HMC in {gauss_wins}/{n}");
    if banana_wins >= 7 && gauss_wins >= 7 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn gradients() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut data = synthetic_logistic_dataset(1000, 24, 10).map_err(|e| e.to_string())?;
    data.standardize();
    let targets: Vec<(TargetModel, f64)> = vec![
        (make_banana(), 4.0),
        (make_ill_conditioned_gaussian(50).map_err(|e| e.to_string())?, 3.0),
        (make_logistic_regression(data).map_err(|e| e.to_string())?, 0.5),
        (generate_item_response(10).1, 1.0),
    ];
    let mut parts = Vec::new();
    for (target, scale) in &targets {
        let dim = target.dim();
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let x: Vec<f64> = (0..dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
            let err = if dim > 100 {
                let dirs: Vec<Vec<f64>> = (0..4)
                    .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
                    .collect();
                directional_gradient_check(target, &x, &dirs)
            } else {
                gradient_check(target, &x)
            };
            worst = worst.max(err);
        }
        parts.push(format!("{} {worst:.1e}", target.name()));
        if !(worst <= 1e-5) {
            return Err(parts.join(", "));
        }
    }
    Ok(parts.join(", "))
}

fn run_cli(dir: &Path, workers: usize) -> Result<Vec<u8>, String> {
    let status = Command::new(env!("CARGO_BIN_EXE_orbital"))
        .args(["sample", "--target", "banana", "--chains", "16", "--seed", "5", "--budget", "20000", "--out"])
        .arg(dir)
        .env("ORBITAL_WORKERS", workers.to_string())
        .status()
        .map_err(|e| e.to_string())?;
    if !status.success() {
        return Err(format!("sample exited with {status}"));
    }
    std::fs::read(dir.join("metrics.csv")).map_err(|e| e.to_string())
}

fn determinism() -> Verdict {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for (i, workers) in [1, 1, 8, 8].into_iter().enumerate() {
        outputs.push(run_cli(&tmp.path().join(format!("run{i}")), workers)?);
    }
    if outputs.iter().all(|o| *o == outputs[0]) {
        Ok(format!("4 runs (1, 1, 8, 8 workers) wrote identical {} bytes", outputs[0].len()))
    } else {
        Err("metrics.csv differs between runs".into())
    }
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "invariance", limit: Some(Duration::from_secs(10)), run: invariance },
        Criterion { id: 2, name: "mhg_reduction", limit: None, run: mhg_reduction },
        Criterion { id: 3, name: "reversibility", limit: Some(Duration::from_secs(5)), run: reversibility },
        Criterion { id: 4, name: "weight_convergence", limit: Some(Duration::from_secs(30)), run: weight_convergence },
        Criterion { id: 5, name: "diffusing_convergence", limit: None, run: diffusing_convergence },
        Criterion { id: 6, name: "escape_time", limit: None, run: escape_time },
        Criterion { id: 7, name: "deterministic_snis", limit: Some(Duration::from_secs(120)), run: deterministic_snis },
        Criterion { id: 8, name: "end_to_end_banana", limit: Some(Duration::from_secs(300)), run: end_to_end },
        Criterion { id: 9, name: "directional_comparison", limit: None, run: directional },
        Criterion { id: 10, name: "gradient_checks", limit: Some(Duration::from_secs(10)), run: gradients },
        Criterion { id: 11, name: "determinism", limit: None, run: determinism },
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for c in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| c.name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let verdict = (c.run)();
        let elapsed = start.elapsed();
        let verdict = match (verdict, c.limit) {
            (Ok(msg), Some(limit)) if elapsed > limit => Err(format!("{msg}; took {elapsed:.1?}, limit {limit:?}")),
            (v, _) => v,
        };
        match verdict {
            Ok(msg) => println!("criterion {:>2} {:<24} PASS  {msg} [{elapsed:.1?}]", c.id, c.name),
            Err(msg) => {
                failed += 1;
                println!("criterion {:>2} {:<24} FAIL  {msg} [{elapsed:.1?}]", c.id, c.name);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
