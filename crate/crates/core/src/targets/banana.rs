use super::{normal_log_pdf, LogDensity, TargetModel};

const X1_VARIANCE: f64 = 10.0;
const CURVATURE: f64 = 0.03;
const OFFSET: f64 = 100.0;

/// Two-dimensional banana: `N(x1 | 0, 10) N(x2 | 0.03 (x1^2 - 100), 1)`.
/// Both second parameters are variances.
#[derive(Debug, Clone, Copy, Default)]
pub struct Banana;

impl Banana {
    fn conditional_mean(x1: f64) -> f64 {
        CURVATURE * (x1 * x1 - OFFSET)
    }
}

impl LogDensity for Banana {
    fn dim(&self) -> usize {
        2
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        normal_log_pdf(x[0], 0.0, X1_VARIANCE) + normal_log_pdf(x[1], Self::conditional_mean(x[0]), 1.0)
    }

    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let r = x[1] - Self::conditional_mean(x[0]);
        grad[0] = -x[0] / X1_VARIANCE + r * 2.0 * CURVATURE * x[0];
        grad[1] = -r;
        self.log_density(x)
    }
}

pub fn make_banana() -> TargetModel {
    // E[x2] = 0.03 (E[x1^2] - 100) = -2.7
    // Var[x2] = 1 + 0.03^2 Var[x1^2] = 1 + 0.0009 * 2 * 10^2
    let mean_x2 = CURVATURE * (X1_VARIANCE - OFFSET);
    let var_x2 = 1.0 + CURVATURE * CURVATURE * 2.0 * X1_VARIANCE * X1_VARIANCE;
    TargetModel::new("banana", Banana).with_reference_moments(vec![0.0, mean_x2], vec![X1_VARIANCE, var_x2])
}
