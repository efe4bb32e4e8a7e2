use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelKind {
    Hmc,
    RecycledHmc,
    OrbitalPeriodic,
    OrbitalContracting,
    LinearCombination,
    Diffusing,
}

impl KernelKind {
    pub const ALL: [KernelKind; 6] = [
        KernelKind::Hmc,
        KernelKind::RecycledHmc,
        KernelKind::OrbitalPeriodic,
        KernelKind::OrbitalContracting,
        KernelKind::LinearCombination,
        KernelKind::Diffusing,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            KernelKind::Hmc => "hmc",
            KernelKind::RecycledHmc => "recycled_hmc",
            KernelKind::OrbitalPeriodic => "orbital_periodic",
            KernelKind::OrbitalContracting => "orbital_contracting",
            KernelKind::LinearCombination => "linear_combination",
            KernelKind::Diffusing => "diffusing",
        }
    }

    /// Kernels that emit a whole weighted orbit per step.
    pub fn emits_orbits(self) -> bool {
        !matches!(self, KernelKind::Hmc | KernelKind::Diffusing)
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        KernelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown kernel {s:?}")))
    }
}

/// How a periodic kernel updates the direction index after selecting the
/// next point of the orbit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionUpdate {
    /// Keep the selected point's direction.
    Keep,
    /// Shift by `T / 2` (falls back to `Resample` for odd `T`).
    ShiftHalf,
    /// Draw a fresh uniform direction.
    Resample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelConfig {
    pub kind: KernelKind,
    pub eps: f64,
    /// Orbit period `T` for periodic kernels.
    pub period: usize,
    /// Friction for the contracting kernel.
    pub beta: f64,
    /// Truncation threshold `W` for the contracting kernel.
    pub threshold: f64,
    pub direction_shift: bool,
    pub lincomb_weights: Option<Vec<f64>>,
    /// Maximum trajectory length (time units) for jittered HMC variants.
    pub trajectory_length: f64,
    /// Hard cap on contracting-orbit extension per direction.
    pub max_extension: usize,
}

impl KernelConfig {
    pub fn new(kind: KernelKind, eps: f64) -> Self {
        KernelConfig {
            kind,
            eps,
            period: 20,
            beta: 1.0,
            threshold: super::DEFAULT_THRESHOLD,
            direction_shift: true,
            lincomb_weights: None,
            trajectory_length: 1.0,
            max_extension: super::DEFAULT_MAX_EXTENSION,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::invalid(format!("eps must be positive, got {}", self.eps)));
        }
        match self.kind {
            KernelKind::OrbitalPeriodic | KernelKind::LinearCombination | KernelKind::Diffusing => {
                if self.period < 2 {
                    return Err(Error::invalid(format!("period must be >= 2, got {}", self.period)));
                }
            }
            KernelKind::OrbitalContracting => {
                if !(self.beta > 0.0 && self.beta < 1.0) {
                    return Err(Error::invalid(format!(
                        "contracting kernel needs 0 < beta < 1, got {}",
                        self.beta
                    )));
                }
                if !(self.threshold > 1.0) {
                    return Err(Error::invalid(format!("threshold W must exceed 1, got {}", self.threshold)));
                }
                if self.max_extension == 0 {
                    return Err(Error::invalid("max_extension must be positive"));
                }
            }
            KernelKind::Hmc | KernelKind::RecycledHmc => {
                if !(self.trajectory_length > 0.0 && self.trajectory_length.is_finite()) {
                    return Err(Error::invalid("trajectory_length must be positive"));
                }
            }
        }
        if let Some(w) = &self.lincomb_weights {
            if w.len() != self.period {
                return Err(Error::invalid(format!(
                    "lincomb_weights needs {} entries, got {}",
                    self.period,
                    w.len()
                )));
            }
            let total: f64 = w.iter().sum();
            if w.iter().any(|x| *x < 0.0 || !x.is_finite()) || (total - 1.0).abs() > 1e-9 {
                return Err(Error::invalid("lincomb_weights must be non-negative and sum to 1"));
            }
        }
        Ok(())
    }

    pub fn direction_update(&self) -> DirectionUpdate {
        if self.direction_shift {
            DirectionUpdate::ShiftHalf
        } else {
            DirectionUpdate::Keep
        }
    }

    /// Mixture weights for the linear-combination kernel: the configured
    /// vector, or uniform over `m = 1..T-1`.
    pub fn resolved_lincomb_weights(&self) -> Vec<f64> {
        self.lincomb_weights.clone().unwrap_or_else(|| {
            let t = self.period;
            (0..t).map(|m| if m == 0 { 0.0 } else { 1.0 / (t - 1) as f64 }).collect()
        })
    }
}
