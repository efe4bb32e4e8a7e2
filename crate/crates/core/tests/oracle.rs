use orbital_core::dynamics::{weyl_map, Normal1d, PhaseState, SQRT2_FRACTION};
use orbital_core::kernels::CChoice;
use orbital_core::oracle::{
    build_kernel_matrix, detailed_balance_residual, escape_time_check, invariance_residual, returning_orbit_check,
    time_average_weights, DiscreteOrbit, OracleKernel,
};
use orbital_core::targets::{make_bimodal_mixture, DiagonalGaussian, TargetModel};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn kinds(t: usize, mix: Vec<f64>) -> Vec<OracleKernel> {
    let mut v = vec![
        OracleKernel::Escaping,
        OracleKernel::MStep(1),
        OracleKernel::MStep(2),
        OracleKernel::MStep(3),
        OracleKernel::Diffusing(CChoice::HalfInf),
        OracleKernel::Diffusing(CChoice::Optimal),
    ];
    if mix.len() == t {
        v.push(OracleKernel::LinearCombination(mix));
    }
    v
}

fn orbit_strategy() -> impl Strategy<Value = (DiscreteOrbit, Vec<f64>)> {
    prop::sample::select(vec![2usize, 3, 5, 17, 100]).prop_flat_map(|t| {
        (
            prop::collection::vec(-5.0f64..5.0, t),
            prop::option::of(prop::collection::vec(0.05f64..20.0, t)),
            prop::collection::vec(0.01f64..1.0, t),
        )
            .prop_map(move |(logp, jac, raw)| {
                let p = logp.iter().map(|l| l.exp()).collect();
                let j = jac.unwrap_or_else(|| vec![1.0; t]);
                let total: f64 = raw.iter().sum();
                let w = raw.iter().map(|r| r / total).collect();
                (DiscreteOrbit::new(p, j, true).unwrap(), w)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn every_kernel_leaves_the_orbit_measure_invariant((orbit, mix) in orbit_strategy()) {
        for kind in kinds(orbit.size(), mix) {
            let k = build_kernel_matrix(&orbit, &kind).unwrap();
            k.check_stochastic(1e-12).unwrap();
            let r = invariance_residual(&k, &orbit.measure()).unwrap();
            prop_assert!(r <= 1e-12, "{kind:?}: residual {r}");
        }
    }

    #[test]
    fn diffusing_kernels_are_reversible((orbit, _) in orbit_strategy()) {
        for choice in [CChoice::HalfInf, CChoice::Optimal] {
            let k = build_kernel_matrix(&orbit, &OracleKernel::Diffusing(choice)).unwrap();
            prop_assert!(detailed_balance_residual(&k, &orbit.measure()).unwrap() <= 1e-14);
        }
    }

    #[test]
    fn two_point_escaping_is_reversible(a in -5.0f64..5.0, b in -5.0f64..5.0, j in 0.05f64..20.0) {
        let orbit = DiscreteOrbit::new(vec![a.exp(), b.exp()], vec![1.0, j], true).unwrap();
        let k = build_kernel_matrix(&orbit, &OracleKernel::Escaping).unwrap();
        prop_assert!(detailed_balance_residual(&k, &orbit.measure()).unwrap() <= 1e-14);
    }
}

#[test]
fn three_cycle_escaping_is_irreversible() {
    let orbit = DiscreteOrbit::periodic(vec![1.0, 2.0, 3.0]).unwrap();
    let k = build_kernel_matrix(&orbit, &OracleKernel::Escaping).unwrap();
    assert!(detailed_balance_residual(&k, orbit.densities()).unwrap() > 1e-3);
}

#[test]
fn escaping_time_average_converges_monotonically() {
    let orbit = DiscreteOrbit::periodic(vec![1.0, 2.0, 3.0]).unwrap();
    let k = build_kernel_matrix(&orbit, &OracleKernel::Escaping).unwrap();
    let exact = orbit.stationary();
    let err = |t| {
        let w = time_average_weights(&k, t, 0).unwrap();
        w.iter().zip(&exact).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()))
    };
    let errs: Vec<f64> = [1_000, 10_000, 100_000].into_iter().map(err).collect();
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    assert!(errs[2] < 1e-3);
}

#[test]
fn diffusing_time_average_on_gaussian_lattice() {
    let p: Vec<f64> = (-20..=20).map(|i: i32| (-0.5 * (i * i) as f64).exp()).collect();
    let orbit = DiscreteOrbit::window(p).unwrap();
    let exact = orbit.stationary();
    for choice in [CChoice::HalfInf, CChoice::Optimal] {
        let k = build_kernel_matrix(&orbit, &OracleKernel::Diffusing(choice)).unwrap();
        assert!(detailed_balance_residual(&k, orbit.densities()).unwrap() <= 1e-14);
        let w = time_average_weights(&k, 100_000, 20).unwrap();
        for (a, b) in w.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-3);
        }
    }
}

#[test]
fn escape_time_profiles() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for g in [vec![0.5; 3], vec![1.0, 0.5, 1.0 / 3.0], vec![0.9, 0.2, 0.6, 0.05]] {
        let r = escape_time_check(&g, g.len(), 100_000, &mut rng).unwrap();
        assert!((r.empirical_mean - r.predicted).abs() < 3.0 * r.standard_error, "{g:?}: {r:?}");
    }
    let r = escape_time_check(&[0.5; 3], 3, 10, &mut rng).unwrap();
    assert_eq!(r.predicted, 6.0);
}

#[test]
fn returning_orbit_gap_closes() {
    let target = make_bimodal_mixture();
    let map = weyl_map(Normal1d::new(0.0, 2.0).unwrap(), SQRT2_FRACTION);
    let rows = returning_orbit_check(&target, &map, &PhaseState::position(vec![0.3]), &[0, 10, 100, 1000, 10_000])
        .unwrap();
    assert_eq!(rows[0].one_sided, 1.0);
    assert_eq!(rows[0].two_sided, 1.0);
    for r in &rows {
        assert!(r.gap >= 0.0);
    }
    assert!(rows.last().unwrap().gap <= 1e-2, "{rows:?}");
}

#[test]
fn rational_shift_orbit_closes_after_one_period() {
    let target = TargetModel::new("g", DiagonalGaussian::new(vec![1.0]).unwrap());
    let map = weyl_map(Normal1d::new(0.0, 2.0).unwrap(), 0.25);
    let rows = returning_orbit_check(&target, &map, &PhaseState::position(vec![0.7]), &[4]).unwrap();
    assert!(rows[0].gap.abs() < 1e-9, "{rows:?}");
}
