//! Experiment configuration: a flat `key = value` TOML file plus
//! `--set key=value` overrides, with unknown keys rejected.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use orbital_core::adaptation::{
    DEFAULT_CHEES_LEARNING_RATE, DEFAULT_TARGET_ACCEPT, DEFAULT_T_MAX_BOUNDS, MAX_LEAPFROG_STEPS,
};
use orbital_core::kernels::{KernelConfig, KernelKind, DEFAULT_MAX_EXTENSION, DEFAULT_THRESHOLD};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetName {
    Banana,
    /// Diagonal Gaussian with variances spaced from 1e-2 to 1e2.
    Gaussian,
    Logistic,
    ItemResponse,
    /// Bimodal one-dimensional mixture.
    Mixture,
}

mod kernel_name {
    use orbital_core::kernels::KernelKind;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(k: &KernelKind, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(k.as_str())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<KernelKind, D::Error> {
        let name = String::deserialize(d)?;
        name.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub target: TargetName,
    /// Dimension of the Gaussian target.
    pub dim: usize,
    /// Logistic regression CSV (label in the last column). A synthetic
    /// dataset is generated when absent.
    pub data: Option<PathBuf>,
    pub data_header: bool,
    pub data_rows: usize,
    pub data_features: usize,
    pub data_seed: u64,

    #[serde(with = "kernel_name")]
    pub kernel: KernelKind,
    /// Orbit period. When absent, the even integer nearest
    /// `t_max / eps`, so one orbit spans the adapted trajectory length.
    pub period: Option<usize>,
    /// Contracting-kernel friction; `0.8^(1/dim)` when absent.
    pub beta: Option<f64>,
    pub threshold: f64,
    pub max_extension: usize,
    pub direction_shift: bool,

    pub init_eps: f64,
    pub init_t_max: f64,
    pub target_accept: f64,
    pub chees_learning_rate: f64,
    pub t_max_min: f64,
    pub t_max_max: f64,
    pub adapt_step_size: bool,
    pub adapt_trajectory: bool,

    pub chains: usize,
    pub adapt_iters: usize,
    pub sample_iters: usize,
    /// Gradient evaluations per chain. Defaults to the cost of
    /// `sample_iters` adapted HMC iterations.
    pub budget: Option<u64>,
    pub budget_includes_adaptation: bool,
    pub max_failure_rate: f64,

    pub seed: u64,
    pub out: PathBuf,
    pub samples: bool,
    /// Length of the equal-weight subsample used for ESS.
    pub ess_points: usize,
    pub curve_points: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            target: TargetName::Banana,
            dim: 50,
            data: None,
            data_header: false,
            data_rows: 1000,
            data_features: 24,
            data_seed: 0,
            kernel: KernelKind::OrbitalPeriodic,
            period: None,
            beta: None,
            threshold: DEFAULT_THRESHOLD,
            max_extension: DEFAULT_MAX_EXTENSION,
            direction_shift: true,
            init_eps: 0.1,
            init_t_max: 1.0,
            target_accept: DEFAULT_TARGET_ACCEPT,
            chees_learning_rate: DEFAULT_CHEES_LEARNING_RATE,
            t_max_min: DEFAULT_T_MAX_BOUNDS.0,
            t_max_max: DEFAULT_T_MAX_BOUNDS.1,
            adapt_step_size: true,
            adapt_trajectory: true,
            chains: 100,
            adapt_iters: 1000,
            sample_iters: 1000,
            budget: None,
            budget_includes_adaptation: true,
            max_failure_rate: 0.5,
            seed: 0,
            out: PathBuf::from("out"),
            samples: false,
            ess_points: 1000,
            curve_points: 25,
        }
    }
}

/// Even period nearest `t_max / eps`, within `[2, MAX_LEAPFROG_STEPS]`.
pub fn auto_period(eps: f64, t_max: f64) -> usize {
    let half = (0.5 * t_max / eps).round();
    let half = if half.is_finite() { half as usize } else { 1 };
    (2 * half).clamp(2, MAX_LEAPFROG_STEPS)
}

/// Splits `key=value`.
pub fn parse_assignment(s: &str) -> Result<(String, String)> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => bail!("expected key=value, got {s:?}"),
    }
}

/// A TOML literal when `raw` parses as one, a bare string otherwise.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

impl ExperimentConfig {
    pub fn known_keys() -> Vec<String> {
        match serde_json::to_value(ExperimentConfig::default()) {
            Ok(serde_json::Value::Object(map)) => map.keys().cloned().collect(),
            _ => unreachable!("config serializes to an object"),
        }
    }

    /// Defaults, then the file at `path`, then `overrides` in order.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let known = Self::known_keys();
        let mut table = toml::Table::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let file: toml::Table = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            for (key, value) in file {
                if !known.contains(&key) {
                    bail!("{}: unknown key `{key}` (known keys: {})", path.display(), known.join(", "));
                }
                if value.is_table() || value.is_array() {
                    bail!("{}: key `{key}` must be a scalar", path.display());
                }
                table.insert(key, value);
            }
        }
        for (key, raw) in overrides {
            if !known.contains(key) {
                bail!("--set: unknown key `{key}` (known keys: {})", known.join(", "));
            }
            table.insert(key.clone(), parse_value(raw));
        }
        let mut cfg = ExperimentConfig::default();
        for (key, value) in table {
            cfg = cfg.with_key(&key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn with_key(&self, key: &str, value: toml::Value) -> Result<Self> {
        let mut t = toml::Table::try_from(self).context("serializing config")?;
        t.insert(key.to_string(), value);
        toml::Value::Table(t)
            .try_into()
            .map_err(|e: toml::de::Error| anyhow::anyhow!("key `{key}`: {}", e.message()))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                bail!("key `{key}`: must be positive, got {v}")
            }
        };
        if self.chains == 0 {
            bail!("key `chains`: need at least one chain");
        }
        if self.target == TargetName::Gaussian && self.dim < 2 {
            bail!("key `dim`: gaussian target needs dim >= 2");
        }
        positive("init_eps", self.init_eps)?;
        positive("init_t_max", self.init_t_max)?;
        positive("t_max_min", self.t_max_min)?;
        if !(self.t_max_max > self.t_max_min) {
            bail!("key `t_max_max`: must exceed t_max_min");
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            bail!("key `target_accept`: must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.max_failure_rate) {
            bail!("key `max_failure_rate`: must lie in [0, 1]");
        }
        if self.ess_points < 10 {
            bail!("key `ess_points`: need at least 10");
        }
        if self.curve_points == 0 {
            bail!("key `curve_points`: need at least 1");
        }
        // kernel parameters are checked with placeholder step sizes
        self.kernel_config(self.init_eps, self.init_t_max, 2)
            .validate()
            .map_err(|e| anyhow::anyhow!("kernel `{}`: {e}", self.kernel))
    }

    /// Sampling-phase kernel with the adapted step size and trajectory
    /// length.
    pub fn kernel_config(&self, eps: f64, t_max: f64, dim: usize) -> KernelConfig {
        let mut k = KernelConfig::new(self.kernel, eps);
        k.period = self.period.unwrap_or_else(|| auto_period(eps, t_max));
        k.beta = self.beta.unwrap_or_else(|| 0.8f64.powf(1.0 / dim as f64));
        k.threshold = self.threshold;
        k.max_extension = self.max_extension;
        k.direction_shift = self.direction_shift;
        k.trajectory_length = t_max;
        k
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn overrides_are_typed() {
        let cfg = ExperimentConfig::load(
            None,
            &set(&[("kernel", "hmc"), ("chains", "7"), ("beta", "0.9"), ("out", "/tmp/x y"), ("samples", "true")]),
        )
        .unwrap();
        assert_eq!(cfg.kernel, KernelKind::Hmc);
        assert_eq!(cfg.chains, 7);
        assert_eq!(cfg.beta, Some(0.9));
        assert_eq!(cfg.out, PathBuf::from("/tmp/x y"));
        assert!(cfg.samples);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = ExperimentConfig::load(None, &set(&[("chain", "3")])).unwrap_err().to_string();
        assert!(err.contains("`chain`"), "{err}");
        let err = ExperimentConfig::load(None, &set(&[("chains", "many")])).unwrap_err().to_string();
        assert!(err.contains("`chains`"), "{err}");
        let err = ExperimentConfig::load(None, &set(&[("kernel", "nuts")])).unwrap_err().to_string();
        assert!(err.contains("nuts"), "{err}");
    }

    #[test]
    fn file_then_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "target = \"gaussian\"\ndim = 10\nseed = 4\n").unwrap();
        let cfg = ExperimentConfig::load(Some(&path), &set(&[("seed", "9")])).unwrap();
        assert_eq!(cfg.target, TargetName::Gaussian);
        assert_eq!(cfg.dim, 10);
        assert_eq!(cfg.seed, 9);

        std::fs::write(&path, "[kernel]\nkind = \"hmc\"\n").unwrap();
        assert!(ExperimentConfig::load(Some(&path), &[]).is_err());
        std::fs::write(&path, "colour = 1\n").unwrap();
        let err = ExperimentConfig::load(Some(&path), &[]).unwrap_err().to_string();
        assert!(err.contains("`colour`"), "{err}");
    }

    #[test]
    fn kernel_parameters_are_validated() {
        assert!(ExperimentConfig::load(None, &set(&[("period", "1")])).is_err());
        let cfg = set(&[("kernel", "orbital_contracting"), ("beta", "1.5")]);
        assert!(ExperimentConfig::load(None, &cfg).is_err());
    }

    #[test]
    fn auto_period_spans_trajectory() {
        assert_eq!(auto_period(0.1, 2.0), 20);
        assert_eq!(auto_period(0.15, 18.8), 126);
        assert_eq!(auto_period(1.0, 0.1), 2);
        assert_eq!(auto_period(1e-9, 100.0), MAX_LEAPFROG_STEPS);
        let cfg = ExperimentConfig::load(None, &set(&[("period", "7")])).unwrap();
        assert_eq!(cfg.kernel_config(0.1, 2.0, 2).period, 7);
    }

    #[test]
    fn default_beta_follows_dimension() {
        let k = ExperimentConfig::default().kernel_config(0.1, 1.0, 4);
        assert!((k.beta.powi(8) - 0.64).abs() < 1e-12);
    }

    #[test]
    fn parse_assignment_splits_on_first_equals() {
        assert_eq!(parse_assignment("out=a=b").unwrap(), ("out".into(), "a=b".into()));
        assert!(parse_assignment("novalue").is_err());
    }
}
