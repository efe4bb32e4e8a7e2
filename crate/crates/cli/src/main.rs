use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use orbital_cli::config::parse_assignment;
use orbital_cli::runner::{run_with_workers, worker_count, write_outputs};
use orbital_cli::snis::{snis_experiment, write_snis_csv, DEFAULT_N_GRID, DEFAULT_RUNS};
use orbital_cli::{run_suite, ExperimentConfig, Suite};
use serde_json::json;

/// Exit code when a run produced no samples.
const EXIT_EMPTY: u8 = 3;

#[derive(Parser)]
#[command(name = "orbital", version, about = "Orbital MCMC experiments and verification suites")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Adapt, sample all chains to the budget and write metrics.
    Sample {
        #[arg(long)]
        target: Option<String>,
        #[arg(long)]
        kernel: Option<String>,
        #[arg(long)]
        chains: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Gradient evaluations per chain.
        #[arg(long)]
        budget: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Flat key = value TOML file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override one config key; repeatable. Applied after the flags above.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Also write samples.csv.
        #[arg(long)]
        samples: bool,
    },
    /// Run oracle suites and print a JSON report.
    Verify {
        #[arg(required = true, value_enum)]
        suites: Vec<Suite>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Deterministic versus stochastic SNIS error as a function of n.
    Snis {
        /// Comma-separated sample sizes.
        #[arg(long, value_delimiter = ',')]
        n: Option<Vec<usize>>,
        #[arg(long, default_value_t = DEFAULT_RUNS)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn sample(
    flags: Vec<(&str, Option<String>)>,
    config: Option<PathBuf>,
    set: Vec<String>,
    samples: bool,
) -> Result<ExitCode> {
    let mut overrides: Vec<(String, String)> = flags
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k.to_string(), v)))
        .collect();
    if samples {
        overrides.push(("samples".into(), "true".into()));
    }
    for s in &set {
        overrides.push(parse_assignment(s)?);
    }
    let cfg = ExperimentConfig::load(config.as_deref(), &overrides)?;
    let workers = worker_count()?;
    let outcome = run_with_workers(&cfg, workers)?;
    write_outputs(&outcome, workers)?;
    if outcome.is_empty() {
        eprintln!("warning: empty sample set; see {}", cfg.out.join("run.json").display());
        return Ok(ExitCode::from(EXIT_EMPTY));
    }
    Ok(ExitCode::SUCCESS)
}

fn verify(suites: Vec<Suite>, seed: u64) -> Result<ExitCode> {
    let mut reports = Vec::new();
    for suite in suites {
        let report = run_suite(suite, seed)?;
        eprint!("{}", report.table());
        reports.push(report);
    }
    let passed = reports.iter().all(|r| r.passed);
    println!("{}", serde_json::to_string_pretty(&json!({ "passed": passed, "suites": reports }))?);
    Ok(if passed { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn snis(n: Option<Vec<usize>>, runs: usize, seed: u64, out: Option<PathBuf>) -> Result<ExitCode> {
    let grid = n.unwrap_or_else(|| DEFAULT_N_GRID.to_vec());
    if grid.is_empty() || grid.contains(&0) || runs == 0 {
        anyhow::bail!("sample sizes and runs must be positive");
    }
    let rows = snis_experiment(&grid, runs, seed)?;
    match out {
        Some(path) => {
            let file = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            write_snis_csv(&rows, std::io::BufWriter::new(file))?;
        }
        None => write_snis_csv(&rows, std::io::stdout().lock())?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sample {
            target,
            kernel,
            chains,
            seed,
            budget,
            out,
            config,
            set,
            samples,
        } => sample(
            vec![
                ("target", target),
                ("kernel", kernel),
                ("chains", chains.map(|v| v.to_string())),
                ("seed", seed.map(|v| v.to_string())),
                ("budget", budget.map(|v| v.to_string())),
                ("out", out.map(|p| p.display().to_string())),
            ],
            config,
            set,
            samples,
        ),
        Command::Verify { suites, seed } => verify(suites, seed),
        Command::Snis { n, runs, seed, out } => snis(n, runs, seed, out),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::FAILURE
    })
}
