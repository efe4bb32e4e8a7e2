use rand::Rng;
use rand_distr::StandardNormal;

use super::{LogDensity, TargetModel};
use crate::error::{Error, Result};

/// Zero-mean Gaussian with diagonal covariance.
#[derive(Debug, Clone)]
pub struct DiagonalGaussian {
    variances: Vec<f64>,
    log_norm: f64,
}

impl DiagonalGaussian {
    pub fn new(variances: Vec<f64>) -> Result<Self> {
        if variances.is_empty() || variances.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::invalid("variances must be positive and finite"));
        }
        let log_norm = variances
            .iter()
            .map(|v| -0.5 * (2.0 * std::f64::consts::PI * v).ln())
            .sum();
        Ok(DiagonalGaussian { variances, log_norm })
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    /// Exact draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.variances
            .iter()
            .map(|v| v.sqrt() * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }
}

impl LogDensity for DiagonalGaussian {
    fn dim(&self) -> usize {
        self.variances.len()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        self.log_norm
            - 0.5
                * x.iter()
                    .zip(&self.variances)
                    .map(|(xi, v)| xi * xi / v)
                    .sum::<f64>()
    }

    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        for ((g, xi), v) in grad.iter_mut().zip(x).zip(&self.variances) {
            *g = -xi / v;
        }
        self.log_density(x)
    }
}

/// Variances spaced geometrically from 1e-2 to 1e2 (equal steps in log10).
pub fn ill_conditioned_variances(dim: usize) -> Result<Vec<f64>> {
    if dim < 2 {
        return Err(Error::invalid(format!("ill-conditioned gaussian needs dim >= 2, got {dim}")));
    }
    let span = (dim - 1) as f64;
    Ok((0..dim)
        .map(|i| 10f64.powf(-2.0 + 4.0 * i as f64 / span))
        .collect())
}

pub fn make_ill_conditioned_gaussian(dim: usize) -> Result<TargetModel> {
    let variances = ill_conditioned_variances(dim)?;
    let density = DiagonalGaussian::new(variances.clone())?;
    Ok(TargetModel::new("ill_conditioned_gaussian", density).with_reference_moments(vec![0.0; dim], variances))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn variance_endpoints() {
        let v = ill_conditioned_variances(50).unwrap();
        assert!((v[0] - 1e-2).abs() < 1e-15);
        assert!((v[49] - 1e2).abs() < 1e-11);
        let v2 = ill_conditioned_variances(2).unwrap();
        assert!((v2[0] - 1e-2).abs() < 1e-15 && (v2[1] - 1e2).abs() < 1e-12);
    }

    #[test]
    fn rejects_small_dimension() {
        assert!(matches!(make_ill_conditioned_gaussian(1), Err(Error::InvalidArgument(_))));
        assert!(make_ill_conditioned_gaussian(0).is_err());
    }

    #[test]
    fn log_density_at_origin() {
        let t = make_ill_conditioned_gaussian(2).unwrap();
        let expected = -0.5 * ((2.0 * PI * 1e-2).ln() + (2.0 * PI * 1e2).ln());
        assert!((t.log_density(&[0.0, 0.0]) - expected).abs() < 1e-12);
    }

    #[test]
    fn exact_draws_match_closed_form() {
        let variances = ill_conditioned_variances(50).unwrap();
        let g = DiagonalGaussian::new(variances.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x = g.sample(&mut rng);
            let closed: f64 = x
                .iter()
                .zip(&variances)
                .map(|(xi, v)| -0.5 * (2.0 * PI * v).ln() - 0.5 * xi * xi / v)
                .sum();
            assert!((g.log_density(&x) - closed).abs() <= 1e-12 * closed.abs().max(1.0));
        }
    }
}
