use nalgebra::DMatrix;
use neuroquansa::boltzmann::RbmParams;
use neuroquansa::hardware::experiments::{samples_for, write_resolution_csv};
use neuroquansa::hardware::*;
use neuroquansa::learner::{GibbsBackend, Scale};
use neuroquansa::snn::{ActivationFit, CalibrationMap, NetworkConfig};
use proptest::prelude::*;
use std::collections::BTreeSet;

fn full_range() -> DMatrix<i32> {
    DMatrix::from_iterator(1, 127, -63..=63)
}

#[test]
fn grid_cardinality_over_full_range() {
    for dw in GRID_STEPS {
        let q = quantize_to_grid(&full_range(), dw).unwrap();
        let distinct: BTreeSet<i32> = q.iter().copied().collect();
        let expected = if dw == 1 { 127 } else { 128 / dw as usize + 1 };
        assert_eq!(distinct.len(), expected, "Δw = {dw}");
        assert_eq!(distinct.len(), weight_grid(dw).unwrap().len());
    }
}

#[test]
fn grid_examples() {
    let w = DMatrix::from_row_slice(1, 1, &[5]);
    assert_eq!(quantize_to_grid(&w, 4).unwrap()[0], 4);
    assert_eq!(quantize_to_grid(&full_range(), 1).unwrap(), full_range());
    assert_eq!(weight_grid(64).unwrap(), vec![-63, 0, 63]);
    assert!(quantize_to_grid(&w, 5).is_err());
}

#[test]
fn pseudo_update_examples() {
    let w = DMatrix::from_fn(20, 20, |i, j| (i as i32 * 7 + j as i32 * 3) % 120 - 60);
    assert_eq!(pseudo_update(&w, 0.0, 1).unwrap(), w);
    let all = pseudo_update(&w, 1.0, 1).unwrap();
    assert!(all.iter().zip(w.iter()).all(|(a, b)| (a - b).abs() == 1));
    let some = pseudo_update(&w, 0.1, 1).unwrap();
    assert_eq!(some.iter().zip(w.iter()).filter(|(a, b)| a != b).count(), 40);
    assert!(pseudo_update(&w, 1.5, 1).is_err());
}

fn drift_model(sigma: f64) -> HardwareModel {
    HardwareModel {
        drift_sigma: sigma,
        bias_jitter: sigma,
        seed: 17,
        ..HardwareModel::default()
    }
}

#[test]
fn drift_is_pure_and_reproducible() {
    let params = RbmParams::zeros(8, 20);
    let scale = Scale::default();
    assert_eq!(apply_drift_params(&params, scale, &drift_model(0.0), 3), params);
    let a = apply_drift_params(&params, scale, &drift_model(0.1), 3);
    let b = apply_drift_params(&params, scale, &drift_model(0.1), 3);
    assert_eq!(a, b);
    assert_ne!(a, params);
    assert_eq!(params, RbmParams::zeros(8, 20));
}

#[test]
fn drift_difference_variance_is_twice_sigma_squared() {
    let sigma = 0.1;
    let params = RbmParams::zeros(40, 50);
    let scale = Scale { weight: 1.0, bias: 1.0 };
    let a = apply_drift_params(&params, scale, &drift_model(sigma), 0);
    let b = apply_drift_params(&params, scale, &drift_model(sigma), 1);
    let diffs: Vec<f64> = a.weights.iter().zip(b.weights.iter()).map(|(x, y)| x - y).collect();
    let var = diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64;
    // 2000 draws: relative standard error of a variance is √(2/n) ≈ 3 %.
    assert!((var / (2.0 * sigma * sigma) - 1.0).abs() < 0.15, "{var}");
}

fn flat_calibration(n: usize) -> CalibrationMap {
    CalibrationMap {
        fits: vec![ActivationFit { u0: -51.0, alpha: 1.5, residual: 0.0 }; n],
        weight_factors: vec![0.02; n],
        input_offsets: vec![0.0; n],
    }
}

#[test]
fn network_drift_realizes_abstract_perturbations() {
    let mut net = NetworkConfig::new(3, 4, 0);
    net.set_coupling(0, 1, 10);
    let cal = flat_calibration(7);
    assert_eq!(apply_drift(&net, &cal, &drift_model(0.0), 0).unwrap(), net);

    let drifted = apply_drift(&net, &cal, &drift_model(0.05), 2).unwrap();
    drifted.validate().unwrap();
    assert_eq!(drifted.weights, net.weights);
    assert_eq!(drifted, apply_drift(&net, &cal, &drift_model(0.05), 2).unwrap());
    for i in 0..7 {
        for j in 0..7 {
            assert_eq!(drifted.effective_weight(i, j), drifted.effective_weight(j, i));
            if net.is_visible(i) == net.is_visible(j) {
                assert_eq!(drifted.effective_weight(i, j), 0.0);
            }
        }
    }
    let before = cal.abstract_params(&net).unwrap();
    let after = cal.abstract_params(&drifted).unwrap();
    let max_dw = (&after.weights - &before.weights).amax();
    assert!(max_dw > 0.0 && max_dw < 0.05 * 5.0);
}

#[test]
fn resolution_rows_and_csv() {
    let options = ResolutionOptions {
        n_visible: 3,
        n_hidden: 4,
        steps: vec![1, 64],
        repetitions: 2,
        duration: 0.02,
        ..ResolutionOptions::default()
    };
    let rows = run_resolution_experiment(|| Ok(GibbsBackend::default()), &options).unwrap();
    assert_eq!(rows.len(), 2);
    // 8 states, ~1.3e4 samples each: the floor is about 7/(2·1.3e4) per side.
    assert!(rows[0].dkl_mean < 2e-3, "{rows:?}");
    assert!(rows[1].dkl_mean > rows[0].dkl_mean);
    let mut buf = Vec::new();
    write_resolution_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("dw,dkl_mean,dkl_std\n1,"));
    assert_eq!(samples_for(0.3), 200_000);
}

#[test]
fn exact_backend_is_refused_by_experiments() {
    let options = ResolutionOptions { n_visible: 2, n_hidden: 2, repetitions: 1, duration: 0.001, ..Default::default() };
    let r = run_resolution_experiment(|| Ok(neuroquansa::learner::ExactBackend::default()), &options);
    assert!(r.is_err());
}

proptest! {
    #[test]
    fn quantization_is_idempotent(values in prop::collection::vec(-80i32..80, 1..60), k in 0usize..7) {
        let dw = GRID_STEPS[k];
        let w = DMatrix::from_row_slice(1, values.len(), &values);
        let once = quantize_to_grid(&w, dw).unwrap();
        prop_assert_eq!(quantize_to_grid(&once, dw).unwrap(), once.clone());
        let grid = weight_grid(dw).unwrap();
        prop_assert!(once.iter().all(|x| grid.contains(x)));
    }

    #[test]
    fn pseudo_update_changes_exact_count(values in prop::collection::vec(-63i32..=63, 1..400), p in 0.0f64..=1.0, seed in any::<u64>()) {
        let w = DMatrix::from_row_slice(1, values.len(), &values);
        let u = pseudo_update(&w, p, seed).unwrap();
        let changed = u.iter().zip(w.iter()).filter(|(a, b)| a != b).count();
        prop_assert_eq!(changed, (p * values.len() as f64).round() as usize);
        prop_assert!(u.iter().zip(w.iter()).all(|(a, b)| (a - b).abs() <= 1 && a.abs() <= 63));
    }
}
