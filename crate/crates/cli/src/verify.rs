//! Oracle verification suites with machine-readable reports.

use std::fmt;

use anyhow::Result;
use clap::ValueEnum;
use orbital_core::dynamics::{weyl_map, Normal1d, PhaseState, SQRT2_FRACTION};
use orbital_core::kernels::CChoice;
use orbital_core::oracle::{
    aperiodic_weight_sums, build_kernel_matrix, detailed_balance_residual, escape_time_check, invariance_residual,
    returning_orbit_check, time_average_weights, DiscreteOrbit, OracleKernel,
};
use orbital_core::targets::{make_bimodal_mixture, DiagonalGaussian, TargetModel};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::runner::chain_rng;
use crate::snis::snis_squared_errors;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Invariance,
    Reversibility,
    Convergence,
    #[value(name = "escape_time")]
    EscapeTime,
    Returning,
    Snis,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Invariance,
        Suite::Reversibility,
        Suite::Convergence,
        Suite::EscapeTime,
        Suite::Returning,
        Suite::Snis,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Invariance => "invariance",
            Suite::Reversibility => "reversibility",
            Suite::Convergence => "convergence",
            Suite::EscapeTime => "escape_time",
            Suite::Returning => "returning",
            Suite::Snis => "snis",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">")]
    Above,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub relation: Relation,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            value,
            relation: Relation::AtMost,
            threshold,
            passed: value <= threshold,
        }
    }

    pub fn above(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            value,
            relation: Relation::Above,
            threshold,
            passed: value > threshold,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    fn new(suite: Suite, checks: Vec<Check>) -> Self {
        SuiteReport {
            suite,
            passed: checks.iter().all(|c| c.passed),
            checks,
        }
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Plain-text table, one check per line.
    pub fn table(&self) -> String {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        let mut s = format!("{}: {}\n", self.suite, if self.passed { "PASS" } else { "FAIL" });
        for c in &self.checks {
            let rel = match c.relation {
                Relation::AtMost => "<=",
                Relation::Above => "> ",
            };
            s += &format!(
                "  {:<width$}  {:>12.4e} {rel} {:<10.1e} {}\n",
                c.name,
                c.value,
                c.threshold,
                if c.passed { "ok" } else { "FAILED" }
            );
        }
        s
    }
}

pub const ORBIT_SIZES: [usize; 5] = [2, 3, 5, 17, 100];
pub const ORBITS_PER_SIZE: usize = 4;
pub const INVARIANCE_TOLERANCE: f64 = 1e-12;
pub const REVERSIBILITY_TOLERANCE: f64 = 1e-14;

pub fn run_suite(suite: Suite, seed: u64) -> Result<SuiteReport> {
    let checks = match suite {
        Suite::Invariance => invariance(seed)?,
        Suite::Reversibility => reversibility(seed)?,
        Suite::Convergence => convergence()?,
        Suite::EscapeTime => escape_time(seed)?,
        Suite::Returning => returning()?,
        Suite::Snis => snis(seed)?,
    };
    Ok(SuiteReport::new(suite, checks))
}

fn kernel_label(k: &OracleKernel) -> String {
    match k {
        OracleKernel::Escaping => "escaping".into(),
        OracleKernel::MStep(m) => format!("m_step_{m}"),
        OracleKernel::Diffusing(CChoice::HalfInf) => "diffusing_half_inf".into(),
        OracleKernel::Diffusing(CChoice::Optimal) => "diffusing_optimal".into(),
        OracleKernel::LinearCombination(_) => "linear_combination".into(),
    }
}

/// Periodic orbit with `log p ~ U(-5, 5)` and, when `jacobians` is set,
/// Jacobians drawn log-uniformly from `[1/20, 20]`.
pub fn random_orbit(rng: &mut ChaCha8Rng, t: usize, jacobians: bool) -> Result<DiscreteOrbit> {
    let p = (0..t).map(|_| rng.random_range(-5.0..5.0f64).exp()).collect();
    let j = (0..t)
        .map(|_| if jacobians { rng.random_range(-3.0..3.0f64).exp() } else { 1.0 })
        .collect();
    Ok(DiscreteOrbit::new(p, j, true)?)
}

fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|r| r / total).collect()
}

fn invariance(seed: u64) -> Result<Vec<Check>> {
    let mut rng = chain_rng(seed, 0);
    let mut worst: Vec<(String, f64)> = Vec::new();
    for t in ORBIT_SIZES {
        for i in 0..ORBITS_PER_SIZE {
            let orbit = random_orbit(&mut rng, t, i % 2 == 1)?;
            let kinds = [
                OracleKernel::Escaping,
                OracleKernel::MStep(1),
                OracleKernel::MStep(2),
                OracleKernel::MStep(3),
                OracleKernel::Diffusing(CChoice::HalfInf),
                OracleKernel::Diffusing(CChoice::Optimal),
                OracleKernel::LinearCombination(random_simplex(&mut rng, t)),
            ];
            for kind in &kinds {
                let k = build_kernel_matrix(&orbit, kind)?;
                let r = invariance_residual(&k, &orbit.measure())?;
                let label = kernel_label(kind);
                match worst.iter_mut().find(|(l, _)| *l == label) {
                    Some(entry) => entry.1 = entry.1.max(r),
                    None => worst.push((label, r)),
                }
            }
        }
    }
    Ok(worst
        .into_iter()
        .map(|(label, r)| Check::at_most(label, r, INVARIANCE_TOLERANCE))
        .collect())
}

/// Mixture weights with `w_m = w_{T-m}` and `w_0 = 0`.
fn symmetric_weights(rng: &mut ChaCha8Rng, t: usize) -> Vec<f64> {
    let mut w = vec![0.0; t];
    for m in 1..=t / 2 {
        let v = rng.random_range(0.01..1.0);
        w[m] = v;
        w[t - m] = v;
    }
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

fn reversibility(seed: u64) -> Result<Vec<Check>> {
    let mut rng = chain_rng(seed, 1);
    let mut involution = 0.0f64;
    let mut half_inf = 0.0f64;
    let mut optimal = 0.0f64;
    let mut symmetric = 0.0f64;
    for t in ORBIT_SIZES {
        for i in 0..ORBITS_PER_SIZE {
            let jac = i % 2 == 1;
            let pair = random_orbit(&mut rng, 2, jac)?;
            let k = build_kernel_matrix(&pair, &OracleKernel::Escaping)?;
            involution = involution.max(detailed_balance_residual(&k, &pair.measure())?);

            let orbit = random_orbit(&mut rng, t, jac)?;
            let mu = orbit.measure();
            let k = build_kernel_matrix(&orbit, &OracleKernel::Diffusing(CChoice::HalfInf))?;
            half_inf = half_inf.max(detailed_balance_residual(&k, &mu)?);
            let k = build_kernel_matrix(&orbit, &OracleKernel::Diffusing(CChoice::Optimal))?;
            optimal = optimal.max(detailed_balance_residual(&k, &mu)?);
            let w = symmetric_weights(&mut rng, t);
            let k = build_kernel_matrix(&orbit, &OracleKernel::LinearCombination(w))?;
            symmetric = symmetric.max(detailed_balance_residual(&k, &mu)?);
        }
    }
    let three = DiscreteOrbit::periodic(vec![1.0, 2.0, 3.0])?;
    let k = build_kernel_matrix(&three, &OracleKernel::Escaping)?;
    let cycle = detailed_balance_residual(&k, three.densities())?;
    Ok(vec![
        Check::at_most("escaping_involution", involution, REVERSIBILITY_TOLERANCE),
        Check::at_most("diffusing_half_inf", half_inf, REVERSIBILITY_TOLERANCE),
        Check::at_most("diffusing_optimal", optimal, REVERSIBILITY_TOLERANCE),
        Check::at_most("linear_combination_symmetric", symmetric, REVERSIBILITY_TOLERANCE),
        Check::above("escaping_three_cycle", cycle, 1e-3),
    ])
}

pub const CONVERGENCE_STEPS: usize = 100_000;
pub const LATTICE_HALF_WIDTH: i32 = 20;

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

fn convergence() -> Result<Vec<Check>> {
    let mut checks = Vec::new();

    let three = DiscreteOrbit::periodic(vec![1.0, 2.0, 3.0])?;
    let k = build_kernel_matrix(&three, &OracleKernel::Escaping)?;
    let w = time_average_weights(&k, CONVERGENCE_STEPS, 0)?;
    checks.push(Check::at_most(
        "time_average_three_orbit",
        max_abs_diff(&w, &[1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]),
        1e-3,
    ));

    // forward windows: constant tests, and a repeating (1, 1/2, 1/3) pattern
    let start = 10;
    let profiles: [(&str, Vec<f64>); 2] = [
        ("constant", vec![0.5; 60_000]),
        ("cyclic", (0..60_000).map(|i| 1.0 / (1 + i % 3) as f64).collect()),
    ];
    for (label, g) in profiles {
        let sums = aperiodic_weight_sums(&g, start, CONVERGENCE_STEPS)?;
        let err = (start..start + 100).fold(0.0f64, |m, i| m.max((sums.cumulative[i] - 1.0 / g[i]).abs()));
        let avg = sums.time_average.iter().copied().fold(0.0, f64::max);
        checks.push(Check::at_most(format!("aperiodic_cumulative_sums_{label}"), err, 1e-3));
        checks.push(Check::at_most(format!("aperiodic_time_average_{label}"), avg, 1e-3));
    }

    let p: Vec<f64> = (-LATTICE_HALF_WIDTH..=LATTICE_HALF_WIDTH)
        .map(|i| (-0.5 * (i * i) as f64).exp())
        .collect();
    let lattice = DiscreteOrbit::window(p)?;
    let exact = lattice.stationary();
    for (label, choice) in [("half_inf", CChoice::HalfInf), ("optimal", CChoice::Optimal)] {
        let k = build_kernel_matrix(&lattice, &OracleKernel::Diffusing(choice))?;
        let w = time_average_weights(&k, CONVERGENCE_STEPS, LATTICE_HALF_WIDTH as usize)?;
        checks.push(Check::at_most(format!("diffusing_lattice_{label}"), max_abs_diff(&w, &exact), 1e-3));
    }
    Ok(checks)
}

pub const ESCAPE_TRIALS: usize = 100_000;

pub fn escape_profiles() -> Vec<(&'static str, Vec<f64>)> {
    vec![
        ("harmonic", vec![1.0, 0.5, 1.0 / 3.0]),
        ("constant", vec![0.5; 3]),
        ("mixed", vec![0.9, 0.2, 0.6, 0.05]),
    ]
}

fn escape_time(seed: u64) -> Result<Vec<Check>> {
    let mut rng = chain_rng(seed, 2);
    let mut checks = Vec::new();
    for (label, g) in escape_profiles() {
        let r = escape_time_check(&g, g.len(), ESCAPE_TRIALS, &mut rng)?;
        let z = (r.empirical_mean - r.predicted).abs() / r.standard_error;
        checks.push(Check::at_most(format!("{label}_standard_errors"), z, 3.0));
        if label == "harmonic" {
            checks.push(Check::at_most("harmonic_prediction", (r.predicted - 6.0).abs(), 1e-12));
        }
    }
    Ok(checks)
}

fn returning() -> Result<Vec<Check>> {
    let target = make_bimodal_mixture();
    let map = weyl_map(Normal1d::new(0.0, 2.0)?, SQRT2_FRACTION);
    let rows = returning_orbit_check(&target, &map, &PhaseState::position(vec![0.3]), &[10, 100, 1000, 10_000])?;
    let mut checks: Vec<Check> = rows
        .iter()
        .map(|r| Check::at_most(format!("irrational_gap_k{}", r.k), r.gap, if r.k == 10_000 { 1e-2 } else { 1.0 }))
        .collect();
    let gauss = TargetModel::new("gaussian", DiagonalGaussian::new(vec![1.0])?);
    let rational = weyl_map(Normal1d::new(0.0, 2.0)?, 0.25);
    let rows = returning_orbit_check(&gauss, &rational, &PhaseState::position(vec![0.7]), &[4])?;
    checks.push(Check::at_most("rational_gap_k4", rows[0].gap.abs(), 1e-9));
    Ok(checks)
}

fn snis(seed: u64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for n in [1000, 10_000] {
        let errs = snis_squared_errors(n, 200, seed)?;
        let det = errs.iter().map(|e| e.0).sum::<f64>() / errs.len() as f64;
        let sto = errs.iter().map(|e| e.1).sum::<f64>() / errs.len() as f64;
        checks.push(Check::at_most(format!("mse_ratio_n{n}"), det / sto, 1.0));
    }
    Ok(checks)
}
