use super::{LogDensity, TargetModel};
use crate::error::{Error, Result};

/// Normalized one-dimensional Gaussian mixture.
#[derive(Debug, Clone)]
pub struct GaussianMixture1d {
    /// `(weight, mean, variance)` per component; weights sum to one.
    components: Vec<(f64, f64, f64)>,
}

impl GaussianMixture1d {
    pub fn new(components: Vec<(f64, f64, f64)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("mixture needs at least one component"));
        }
        if components.iter().any(|(w, m, v)| !(*w > 0.0) || !m.is_finite() || !(*v > 0.0 && v.is_finite())) {
            return Err(Error::invalid("mixture weights and variances must be positive"));
        }
        let total: f64 = components.iter().map(|c| c.0).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("mixture weights sum to {total}, not 1")));
        }
        Ok(GaussianMixture1d { components })
    }

    pub fn mean(&self) -> f64 {
        self.components.iter().map(|(w, m, _)| w * m).sum()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.components.iter().map(|(w, m, v)| w * (v + m * m)).sum::<f64>() - mean * mean
    }

    fn terms(&self, x: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        // (log of weighted component density, d/dx of its log)
        self.components
            .iter()
            .map(move |(w, m, v)| (w.ln() + super::normal_log_pdf(x, *m, *v), -(x - m) / v))
    }
}

impl LogDensity for GaussianMixture1d {
    fn dim(&self) -> usize {
        1
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let terms: Vec<f64> = self.terms(x[0]).map(|t| t.0).collect();
        log_sum_exp(&terms)
    }

    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let terms: Vec<(f64, f64)> = self.terms(x[0]).collect();
        let lse = log_sum_exp(&terms.iter().map(|t| t.0).collect::<Vec<_>>());
        grad[0] = terms.iter().map(|(l, g)| (l - lse).exp() * g).sum();
        lse
    }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `N(-2, 1) / 2 + N(2, 1) / 2`, the bimodal target of the importance
/// sampling experiments.
pub fn make_bimodal_mixture() -> TargetModel {
    let mixture = GaussianMixture1d::new(vec![(0.5, -2.0, 1.0), (0.5, 2.0, 1.0)]).expect("valid mixture");
    let (mean, variance) = (mixture.mean(), mixture.variance());
    TargetModel::new("bimodal", mixture).with_reference_moments(vec![mean], vec![variance])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bimodal_moments() {
        let t = make_bimodal_mixture();
        assert_eq!(t.reference_mean().unwrap(), &[0.0]);
        assert!((t.reference_variance().unwrap()[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn density_is_normalized() {
        let t = make_bimodal_mixture();
        let h = 1e-3;
        let total: f64 = (-12_000..=12_000).map(|i| t.log_density(&[i as f64 * h]).exp() * h).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let t = make_bimodal_mixture();
        for x in [-3.1, -0.4, 0.0, 0.9, 2.5] {
            let h = 1e-6;
            let fd = (t.log_density(&[x + h]) - t.log_density(&[x - h])) / (2.0 * h);
            assert!((t.grad_log_density(&[x])[0] - fd).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(GaussianMixture1d::new(vec![(0.4, 0.0, 1.0)]).is_err());
        assert!(GaussianMixture1d::new(vec![(1.0, 0.0, 0.0)]).is_err());
        assert!(GaussianMixture1d::new(vec![]).is_err());
    }
}
