use std::f64::consts::PI;

use neuroquansa::quantum::{
    build_hamiltonian, exact_ground_state, fidelity, local_energy, observables, variational_energy, TfimSpec,
    DEFAULT_EPSILON,
};
use proptest::prelude::*;

/// Periodic chain ground energy from the free-fermion solution in the even sector.
fn jordan_wigner_e0(n: usize, j: f64, h: f64) -> f64 {
    -(0..n)
        .map(|m| {
            let k = (2 * m + 1) as f64 * PI / n as f64;
            (j * j + h * h - 2.0 * j * h * k.cos()).sqrt()
        })
        .sum::<f64>()
}

#[test]
fn ground_energy_matches_free_fermions() {
    for n in 3..=12 {
        for h in [0.3, 1.0, 2.5] {
            let e0 = exact_ground_state(&TfimSpec::new(n, 1.0, h).unwrap()).unwrap().energy;
            let oracle = jordan_wigner_e0(n, 1.0, h);
            assert!(((e0 - oracle) / oracle).abs() < 1e-9, "N={n} h={h}: {e0} vs {oracle}");
        }
    }
}

#[test]
fn hamiltonian_entries_follow_the_bit_convention() {
    let spec = TfimSpec::new(4, 0.7, 0.4).unwrap();
    let ham = build_hamiltonian(&spec).unwrap();
    // 0b0011: spins 0,1 up and 2,3 down, so two satisfied and two broken bonds.
    assert_eq!(ham.get(0b0011, 0b0011), 0.0);
    assert_eq!(ham.get(0b1111, 0b1111), -4.0 * 0.7);
    assert_eq!(ham.get(0b0011, 0b0111), -0.4);
    assert_eq!(ham.get(0b0011, 0b1111), 0.0);
}

#[test]
fn ground_distribution_has_zero_infidelity_and_energy_error() {
    for h in [0.5, 1.0, 3.0] {
        let spec = TfimSpec::new(6, 1.0, h).unwrap();
        let gs = exact_ground_state(&spec).unwrap();
        let p = gs.probabilities();
        assert!(1.0 - fidelity(&p, &gs).unwrap() < 1e-12);
        let e = variational_energy(&p, &spec, 0.0, Some(gs.energy)).unwrap();
        assert!(e.delta_e.unwrap() < 1e-12);
    }
}

#[test]
fn x_magnetization_grows_with_field() {
    let mut last = -1.0;
    for h in [0.1, 0.5, 0.9, 1.0, 1.25, 5.0, 10.0] {
        let spec = TfimSpec::new(8, 1.0, h).unwrap();
        let sx = observables(&exact_ground_state(&spec).unwrap().probabilities(), &spec, DEFAULT_EPSILON)
            .unwrap()
            .magnetization_x;
        assert!(sx > last, "h={h}");
        last = sx;
    }
    assert!(last > 0.99);
}

fn distribution(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, 1 << n).prop_filter("mass", |p| p.iter().sum::<f64>() > 1e-3)
}

fn case() -> impl Strategy<Value = (TfimSpec, Vec<f64>)> {
    (3usize..=6, 0.1f64..2.0, 0.0f64..3.0)
        .prop_flat_map(|(n, j, h)| (Just(TfimSpec::new(n, j, h).unwrap()), distribution(n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn energy_is_variational((spec, p) in case()) {
        let e0 = exact_ground_state(&spec).unwrap().energy;
        let e = variational_energy(&p, &spec, DEFAULT_EPSILON, None).unwrap().energy;
        prop_assert!(e >= e0 - 1e-9, "{e} < {e0}");
    }

    #[test]
    fn energy_is_mean_local_energy((spec, p) in case()) {
        let total: f64 = p.iter().sum();
        let q: Vec<f64> = p.iter().map(|x| x / total).collect();
        let mean: f64 = (0..q.len()).map(|v| q[v] * local_energy(v, &q, &spec, DEFAULT_EPSILON)).sum();
        let e = variational_energy(&p, &spec, DEFAULT_EPSILON, None).unwrap().energy;
        prop_assert!((mean - e).abs() < 1e-9 * (1.0 + e.abs()));
    }

    #[test]
    fn observables_stay_in_range((spec, p) in case()) {
        let obs = observables(&p, &spec, DEFAULT_EPSILON).unwrap();
        prop_assert!((obs.czz[0] - 1.0).abs() < 1e-12);
        prop_assert!(obs.magnetization_x.abs() <= 1.0 + 1e-6);
        prop_assert!(obs.czz.iter().all(|c| c.abs() <= 1.0 + 1e-12));
        let n = spec.n_spins as f64;
        prop_assert!(obs.magnetization_histogram.iter().all(|(m, _)| m.abs() <= n / 2.0));
        let f = fidelity(&p, &exact_ground_state(&spec).unwrap()).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
    }

    #[test]
    fn spectrum_is_flip_symmetric(n in 3usize..=6, j in 0.1f64..2.0, h in 0.0f64..3.0) {
        let spec = TfimSpec::new(n, j, h).unwrap();
        let dense = build_hamiltonian(&spec).unwrap().to_dense();
        let mask = (1usize << n) - 1;
        let flipped = nalgebra::DMatrix::from_fn(dense.nrows(), dense.ncols(), |r, c| dense[(r ^ mask, c ^ mask)]);
        prop_assert_eq!(&dense, &flipped);
        if h > 0.05 {
            let gs = exact_ground_state(&spec).unwrap();
            for v in 0..gs.amplitudes.len() {
                prop_assert!(gs.amplitudes[v] >= -1e-12);
                prop_assert!((gs.amplitudes[v] - gs.amplitudes[v ^ mask]).abs() < 1e-8);
            }
        }
    }
}
