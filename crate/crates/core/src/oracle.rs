//! Exact finite-state versions of the orbital kernels.
//!
//! A [`DiscreteOrbit`] lists densities `p_i` and Jacobians
//! `J_i = |d f^i / dx|(x_0)` at the points `x_i = f^i(x_0)`. The test ratio
//! from `x_i` to `x_{i+k}` is then `mu_{i+k} / mu_i` with `mu_i = p_i J_i`,
//! and `mu` (normalized) is the distribution every kernel must leave
//! invariant. Matrix powers are applied by repeated vector products.

use rand::Rng;
use rand_distr::{Distribution, Geometric};

use crate::dynamics::{DeterministicMap, PhaseState};
use crate::error::{Error, Result};
use crate::kernels::CChoice;
use crate::targets::TargetModel;

/// Relative mass allowed at the edge of an aperiodic window.
pub const EDGE_MASS_TOLERANCE: f64 = 1e-12;
/// Band mass below this is dropped in aperiodic sweeps (keeps the band
/// narrow and out of subnormal arithmetic).
const NEGLIGIBLE_MASS: f64 = 1e-30;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteOrbit {
    densities: Vec<f64>,
    jacobians: Vec<f64>,
    periodic: bool,
}

impl DiscreteOrbit {
    pub fn new(densities: Vec<f64>, jacobians: Vec<f64>, periodic: bool) -> Result<Self> {
        if densities.len() < 2 {
            return Err(Error::invalid("an orbit needs at least two points"));
        }
        if densities.len() != jacobians.len() {
            return Err(Error::invalid("densities and jacobians differ in length"));
        }
        if densities.iter().chain(&jacobians).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::invalid("densities and jacobians must be positive and finite"));
        }
        Ok(DiscreteOrbit {
            densities,
            jacobians,
            periodic,
        })
    }

    /// Periodic orbit of a measure-preserving map.
    pub fn periodic(densities: Vec<f64>) -> Result<Self> {
        let n = densities.len();
        Self::new(densities, vec![1.0; n], true)
    }

    /// Finite window of an aperiodic orbit of a measure-preserving map.
    pub fn window(densities: Vec<f64>) -> Result<Self> {
        let n = densities.len();
        Self::new(densities, vec![1.0; n], false)
    }

    pub fn size(&self) -> usize {
        self.densities.len()
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    pub fn jacobians(&self) -> &[f64] {
        &self.jacobians
    }

    /// `mu_i = p_i J_i`.
    pub fn measure(&self) -> Vec<f64> {
        self.densities.iter().zip(&self.jacobians).map(|(p, j)| p * j).collect()
    }

    /// `mu` normalized to sum one.
    pub fn stationary(&self) -> Vec<f64> {
        let mu = self.measure();
        let total: f64 = mu.iter().sum();
        mu.into_iter().map(|m| m / total).collect()
    }

    fn neighbour(&self, i: usize, offset: i64) -> Option<usize> {
        let n = self.size() as i64;
        let j = i as i64 + offset;
        if self.periodic {
            Some(j.rem_euclid(n) as usize)
        } else if (0..n).contains(&j) {
            Some(j as usize)
        } else {
            None
        }
    }

    /// `g_m(x_i) = min_k mu_{i+mk} / mu_i`: over every residue for periodic
    /// orbits, over the points inside the window otherwise.
    pub fn m_step_tests(&self, m: usize) -> Vec<f64> {
        let mu = self.measure();
        let n = self.size();
        (0..n)
            .map(|i| {
                let mut g = 1.0f64;
                if self.periodic {
                    for k in 0..n {
                        let j = (i + m * k) % n;
                        if j != i {
                            g = g.min(mu[j] / mu[i]);
                        }
                    }
                } else if m > 0 {
                    for j in (i % m..n).step_by(m) {
                        if j != i {
                            g = g.min(mu[j] / mu[i]);
                        }
                    }
                }
                g
            })
            .collect()
    }

    pub fn escaping_tests(&self) -> Vec<f64> {
        self.m_step_tests(1)
    }
}

/// Kernel families realized on a [`DiscreteOrbit`].
#[derive(Debug, Clone, PartialEq)]
pub enum OracleKernel {
    Escaping,
    MStep(usize),
    Diffusing(CChoice),
    /// Mixture weights `w_m`, `m = 0..T-1`, of `m`-step kernels.
    LinearCombination(Vec<f64>),
}

/// Square row-stochastic matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    n: usize,
    data: Vec<f64>,
}

impl TransitionMatrix {
    fn zeros(n: usize) -> Self {
        TransitionMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    /// Validates shape, signs and row sums (to `1e-14`).
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("transition matrix must be square and non-empty"));
        }
        let m = TransitionMatrix {
            n,
            data: rows.into_iter().flatten().collect(),
        };
        m.check_stochastic(1e-14)?;
        Ok(m)
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] += v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn check_stochastic(&self, tol: f64) -> Result<()> {
        for i in 0..self.n {
            let row = self.row(i);
            if row.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::invalid(format!("row {i} has a negative or NaN entry")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > tol {
                return Err(Error::invalid(format!("row {i} sums to {s}")));
            }
        }
        Ok(())
    }

    /// Row vector times matrix, `v^T K`.
    pub fn left_mul(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (i, vi) in v.iter().enumerate() {
            if *vi == 0.0 {
                continue;
            }
            for (o, k) in out.iter_mut().zip(self.row(i)) {
                *o += vi * k;
            }
        }
        out
    }
}

/// Builds the exact transition matrix of `kind` on `orbit`.
///
/// On an aperiodic window a move whose destination lies outside the window
/// is dropped (its probability stays on the diagonal), and the diffusing
/// constant `c` is taken over the window. Diffusing windows must carry
/// negligible mass at their edges.
pub fn build_kernel_matrix(orbit: &DiscreteOrbit, kind: &OracleKernel) -> Result<TransitionMatrix> {
    let n = orbit.size();
    let mut k = TransitionMatrix::zeros(n);
    let add_move = |k: &mut TransitionMatrix, i: usize, offset: i64, prob: f64| match orbit.neighbour(i, offset) {
        Some(j) => {
            k.add(i, j, prob);
            k.add(i, i, 1.0 - prob);
        }
        None => k.add(i, i, 1.0),
    };
    match kind {
        OracleKernel::Escaping => {
            for (i, g) in orbit.escaping_tests().into_iter().enumerate() {
                add_move(&mut k, i, 1, g);
            }
        }
        OracleKernel::MStep(m) => {
            for (i, g) in orbit.m_step_tests(*m).into_iter().enumerate() {
                add_move(&mut k, i, *m as i64, g);
            }
        }
        OracleKernel::LinearCombination(w) => {
            if !orbit.is_periodic() {
                return Err(Error::invalid("linear combinations need a periodic orbit"));
            }
            if w.len() != n {
                return Err(Error::invalid(format!("need {n} mixture weights, got {}", w.len())));
            }
            if w.iter().any(|v| !(*v >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(Error::invalid("mixture weights must be non-negative and sum to 1"));
            }
            for (m, &wm) in w.iter().enumerate() {
                if wm == 0.0 {
                    continue;
                }
                for (i, g) in orbit.m_step_tests(m).into_iter().enumerate() {
                    add_move(&mut k, i, m as i64, wm * g);
                    // add_move put 1 - w g on the diagonal; keep only w (1 - g)
                    k.add(i, i, wm - 1.0);
                }
            }
        }
        OracleKernel::Diffusing(choice) => {
            let mu = orbit.measure();
            let at = |i: usize, off: i64| orbit.neighbour(i, off).map_or(0.0, |j| mu[j]);
            if !orbit.is_periodic() {
                let max = mu.iter().copied().fold(0.0, f64::max);
                if mu[0] / max > EDGE_MASS_TOLERANCE || mu[n - 1] / max > EDGE_MASS_TOLERANCE {
                    return Err(Error::WindowTooSmall(format!(
                        "edge mass {:e} exceeds {EDGE_MASS_TOLERANCE:e}",
                        (mu[0] / max).max(mu[n - 1] / max)
                    )));
                }
            }
            let bound = match choice {
                CChoice::HalfInf => 2.0 * mu.iter().copied().fold(0.0, f64::max),
                CChoice::Optimal => (0..n).map(|i| at(i, 1) + at(i, -1)).fold(0.0, f64::max),
            };
            if !(bound.is_finite() && bound > 0.0) {
                return Err(Error::DegenerateKernel("c = 0 on this orbit; use the escaping kernel".into()));
            }
            for i in 0..n {
                let (up, down) = (at(i, 1), at(i, -1));
                let (gp, gm) = (up / bound, down / bound);
                if let Some(j) = orbit.neighbour(i, 1) {
                    k.add(i, j, gp);
                }
                if let Some(j) = orbit.neighbour(i, -1) {
                    k.add(i, j, gm);
                }
                k.add(i, i, (bound - (up + down)) / bound);
            }
        }
    }
    Ok(k)
}

/// `||p^T K - p^T||_inf / ||p||_inf`.
pub fn invariance_residual(k: &TransitionMatrix, p: &[f64]) -> Result<f64> {
    if p.len() != k.size() {
        return Err(Error::invalid("density vector and matrix differ in size"));
    }
    let scale = p.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let pk = k.left_mul(p);
    Ok(pk.iter().zip(p).fold(0.0f64, |a, (x, y)| a.max((x - y).abs())) / scale)
}

/// `max_{i,j} |p_i K_ij - p_j K_ji|` with `p` normalized to sum one.
pub fn detailed_balance_residual(k: &TransitionMatrix, p: &[f64]) -> Result<f64> {
    if p.len() != k.size() {
        return Err(Error::invalid("density vector and matrix differ in size"));
    }
    let total: f64 = p.iter().sum();
    let mut r = 0.0f64;
    for i in 0..k.size() {
        for j in (i + 1)..k.size() {
            r = r.max((p[i] * k.get(i, j) - p[j] * k.get(j, i)).abs() / total);
        }
    }
    Ok(r)
}

/// `(1/t) sum_{s<t} delta_start^T K^s`.
pub fn time_average_weights(k: &TransitionMatrix, t: usize, start: usize) -> Result<Vec<f64>> {
    if t == 0 {
        return Err(Error::invalid("t must be at least 1"));
    }
    if start >= k.size() {
        return Err(Error::invalid("start index outside the orbit"));
    }
    let mut w = vec![0.0; k.size()];
    w[start] = 1.0;
    let mut sum = w.clone();
    for _ in 1..t {
        w = k.left_mul(&w);
        for (s, v) in sum.iter_mut().zip(&w) {
            *s += v;
        }
    }
    Ok(sum.into_iter().map(|s| s / t as f64).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSums {
    /// `sum_{s<t} omega_i^s`.
    pub cumulative: Vec<f64>,
    /// `cumulative / t`.
    pub time_average: Vec<f64>,
}

/// Weight dynamics of the escaping kernel on a forward window with tests
/// `g`: all mass starts at `start` and index `i` passes on a fraction
/// `g_i` of its mass to `i + 1` each step. Only the band that holds mass
/// is updated, and mass below `1e-30` at the band edges is dropped; mass
/// reaching the last index is an error.
pub fn aperiodic_weight_sums(g: &[f64], start: usize, t: usize) -> Result<WeightSums> {
    let n = g.len();
    if start >= n {
        return Err(Error::invalid("start index outside the window"));
    }
    if g.iter().any(|v| !(*v > 0.0 && *v <= 1.0)) {
        return Err(Error::invalid("tests must lie in (0, 1]"));
    }
    let mut w = vec![0.0; n];
    let mut cumulative = vec![0.0; n];
    w[start] = 1.0;
    let (mut lo, mut hi) = (start, start);
    for _ in 0..t {
        for i in lo..=hi {
            cumulative[i] += w[i];
        }
        if w[n - 1] > EDGE_MASS_TOLERANCE {
            return Err(Error::WindowTooSmall(format!(
                "mass {:e} reached the end of a {n}-point window",
                w[n - 1]
            )));
        }
        // sweep backward so each move uses last step's mass
        let front = g[hi] * w[hi];
        for i in (lo..=hi).rev() {
            w[i] -= g[i] * w[i];
            if i > lo {
                w[i] += g[i - 1] * w[i - 1];
            }
        }
        if hi + 1 < n && front > NEGLIGIBLE_MASS {
            w[hi + 1] = front;
            hi += 1;
        }
        while lo < hi && w[lo] < NEGLIGIBLE_MASS {
            w[lo] = 0.0;
            lo += 1;
        }
    }
    let time_average = cumulative.iter().map(|c| c / t.max(1) as f64).collect();
    Ok(WeightSums {
        cumulative,
        time_average,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EscapeTimeReport {
    pub empirical_mean: f64,
    pub standard_error: f64,
    /// `sum_{i<n} 1 / g_i`.
    pub predicted: f64,
}

/// Monte Carlo steps needed by the escaping kernel to leave the first `n`
/// orbit points, against the geometric-waiting-time prediction.
pub fn escape_time_check<R: Rng + ?Sized>(g: &[f64], n: usize, trials: usize, rng: &mut R) -> Result<EscapeTimeReport> {
    if n == 0 || n > g.len() {
        return Err(Error::invalid(format!("n = {n} outside 1..={}", g.len())));
    }
    if trials < 2 {
        return Err(Error::invalid("need at least two trials"));
    }
    let waits = g[..n]
        .iter()
        .map(|&p| Geometric::new(p).map_err(|e| Error::invalid(format!("test {p}: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    let times: Vec<f64> = (0..trials)
        .map(|_| waits.iter().map(|w| (w.sample(rng) + 1) as f64).sum())
        .collect();
    let mean = times.iter().sum::<f64>() / trials as f64;
    let var = times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
    Ok(EscapeTimeReport {
        empirical_mean: mean,
        standard_error: (var / trials as f64).sqrt(),
        predicted: g[..n].iter().map(|v| 1.0 / v).sum(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReturningRow {
    pub k: usize,
    /// `inf_{0 <= j <= k}` of the test ratio.
    pub one_sided: f64,
    /// `inf_{-k <= j <= k}` of the test ratio.
    pub two_sided: f64,
    pub gap: f64,
}

/// Compares one-sided and two-sided infima of `p(f^j x) |df^j| / p(x)`
/// along the orbit of `map` through `x0` at each truncation in `ladder`.
pub fn returning_orbit_check<M: DeterministicMap + ?Sized>(
    target: &TargetModel,
    map: &M,
    x0: &PhaseState,
    ladder: &[usize],
) -> Result<Vec<ReturningRow>> {
    let k_max = ladder.iter().copied().max().unwrap_or(0);
    let mut origin = x0.clone();
    origin.log_jac = 0.0;
    let lw0 = target.log_density(origin.x());
    let walk = |forward: bool| -> Result<Vec<f64>> {
        let mut cur = origin.clone();
        let mut out = Vec::with_capacity(k_max);
        for _ in 0..k_max {
            cur = if forward { map.forward(&cur)? } else { map.inverse(&cur)? };
            out.push((target.log_density(cur.x()) + cur.log_jac - lw0).exp());
        }
        Ok(out)
    };
    let fwd = walk(true)?;
    let bwd = walk(false)?;
    Ok(ladder
        .iter()
        .map(|&k| {
            let one = fwd[..k].iter().copied().fold(1.0f64, f64::min);
            let two = bwd[..k].iter().copied().fold(one, f64::min);
            ReturningRow {
                k,
                one_sided: one,
                two_sided: two,
                gap: one - two,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_rows(k: &TransitionMatrix, rows: &[[f64; 3]]) {
        for (i, row) in rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert!((k.get(i, j) - v).abs() < 1e-15, "K[{i}][{j}] = {}", k.get(i, j));
            }
        }
    }

    #[test]
    fn escaping_matrix_on_three_orbit() {
        let orbit = DiscreteOrbit::periodic(vec![1.0, 2.0, 3.0]).unwrap();
        let k = build_kernel_matrix(&orbit, &OracleKernel::Escaping).unwrap();
        assert_rows(&k, &[[0.0, 1.0, 0.0], [0.0, 0.5, 0.5], [1.0 / 3.0, 0.0, 2.0 / 3.0]]);
        assert!(invariance_residual(&k, orbit.densities()).unwrap() <= 1e-15);
        assert!(detailed_balance_residual(&k, orbit.densities()).unwrap() > 1e-3);
    }

    #[test]
    fn constant_density_is_cyclic_permutation() {
        let orbit = DiscreteOrbit::periodic(vec![0.7; 4]).unwrap();
        let k = build_kernel_matrix(&orbit, &OracleKernel::Escaping).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(k.get(i, j), if j == (i + 1) % 4 { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn two_point_escaping_is_metropolis_hastings() {
        let (p0, p1) = (0.2, 0.9);
        let orbit = DiscreteOrbit::periodic(vec![p0, p1]).unwrap();
        let k = build_kernel_matrix(&orbit, &OracleKernel::Escaping).unwrap();
        let a01 = (p1 / p0).min(1.0);
        let a10 = (p0 / p1).min(1.0);
        assert_eq!(k.row(0), &[1.0 - a01, a01]);
        assert_eq!(k.row(1), &[a10, 1.0 - a10]);
        assert!(detailed_balance_residual(&k, orbit.densities()).unwrap() <= 1e-14);
    }

    #[test]
    fn mismatched_density_is_not_invariant() {
        let k = TransitionMatrix::from_rows(vec![vec![0.5, 0.5], vec![0.1, 0.9]]).unwrap();
        assert!(invariance_residual(&k, &[0.5, 0.5]).unwrap() > 0.1);
        assert!(TransitionMatrix::from_rows(vec![vec![0.5, 0.6], vec![0.1, 0.9]]).is_err());
        assert!(TransitionMatrix::from_rows(vec![vec![1.0]; 2]).is_err());
    }

    #[test]
    fn diffusing_matrices_are_reversible() {
        let orbit = DiscreteOrbit::new(vec![1.0, 5.0, 2.0, 0.5, 3.0], vec![1.0, 0.5, 2.0, 1.5, 0.2], true).unwrap();
        for choice in [CChoice::HalfInf, CChoice::Optimal] {
            let k = build_kernel_matrix(&orbit, &OracleKernel::Diffusing(choice)).unwrap();
            k.check_stochastic(1e-14).unwrap();
            let mu = orbit.measure();
            assert!(invariance_residual(&k, &mu).unwrap() <= 1e-14);
            assert!(detailed_balance_residual(&k, &mu).unwrap() <= 1e-14);
        }
    }

    #[test]
    fn diffusing_window_needs_negligible_edges() {
        let orbit = DiscreteOrbit::window(vec![1.0, 2.0, 1.0]).unwrap();
        assert!(matches!(
            build_kernel_matrix(&orbit, &OracleKernel::Diffusing(CChoice::HalfInf)),
            Err(Error::WindowTooSmall(_))
        ));
    }

    #[test]
    fn linear_combination_reversible_when_balanced() {
        let orbit = DiscreteOrbit::periodic(vec![1.0, 2.0, 3.0]).unwrap();
        let k = build_kernel_matrix(&orbit, &OracleKernel::LinearCombination(vec![0.0, 0.5, 0.5])).unwrap();
        k.check_stochastic(1e-14).unwrap();
        assert!(detailed_balance_residual(&k, orbit.densities()).unwrap() <= 1e-14);
        let k = build_kernel_matrix(&orbit, &OracleKernel::LinearCombination(vec![0.2, 0.6, 0.2])).unwrap();
        assert!(invariance_residual(&k, orbit.densities()).unwrap() <= 1e-15);
        assert!(detailed_balance_residual(&k, orbit.densities()).unwrap() > 1e-3);
    }

    #[test]
    fn m_step_tests_on_three_orbit() {
        let orbit = DiscreteOrbit::periodic(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(orbit.m_step_tests(3), vec![1.0; 3]);
        let g1 = orbit.m_step_tests(1);
        let g2 = orbit.m_step_tests(2);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn time_average_start_and_limit() {
        let orbit = DiscreteOrbit::periodic(vec![1.0, 2.0, 3.0]).unwrap();
        let k = build_kernel_matrix(&orbit, &OracleKernel::Escaping).unwrap();
        assert_eq!(time_average_weights(&k, 1, 2).unwrap(), vec![0.0, 0.0, 1.0]);
        let w = time_average_weights(&k, 100_000, 0).unwrap();
        for (a, b) in w.iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
            assert!((a - b).abs() < 1e-3);
        }
        assert!(time_average_weights(&k, 0, 0).is_err());
    }

    #[test]
    fn aperiodic_sums_reach_inverse_tests() {
        let g = vec![0.5; 60_000];
        let sums = aperiodic_weight_sums(&g, 10, 100_000).unwrap();
        for i in 10..100 {
            assert!((sums.cumulative[i] - 2.0).abs() < 1e-3, "{i}: {}", sums.cumulative[i]);
        }
        assert!(sums.time_average[10] <= 1e-3);
        assert!(sums.cumulative[..10].iter().all(|c| *c == 0.0));
    }

    #[test]
    fn aperiodic_sums_detect_small_window() {
        let g = vec![0.5; 50];
        assert!(matches!(aperiodic_weight_sums(&g, 0, 1000), Err(Error::WindowTooSmall(_))));
    }

    #[test]
    fn escape_time_examples() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let r = escape_time_check(&[1.0; 4], 4, 100, &mut rng).unwrap();
        assert_eq!(r.empirical_mean, 4.0);
        assert_eq!(r.standard_error, 0.0);
        let r = escape_time_check(&[1.0, 0.5, 1.0 / 3.0], 3, 100_000, &mut rng).unwrap();
        assert!((r.predicted - 6.0).abs() < 1e-12);
        assert!((r.empirical_mean - r.predicted).abs() < 3.0 * r.standard_error);
    }

    #[test]
    fn orbit_validation() {
        assert!(DiscreteOrbit::periodic(vec![1.0]).is_err());
        assert!(DiscreteOrbit::periodic(vec![1.0, 0.0]).is_err());
        assert!(DiscreteOrbit::new(vec![1.0, 2.0], vec![1.0], true).is_err());
    }
}
