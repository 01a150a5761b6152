use nalgebra::DMatrix;
use neuroquansa::boltzmann::{exact_marginal, RbmParams};
use neuroquansa::error::{Error, Result};
use neuroquansa::learner::*;
use neuroquansa::quantum::{exact_ground_state, variational_energy, TfimSpec};
use neuroquansa::rng;
use neuroquansa::states::StateSamples;
use proptest::prelude::*;
use rand::Rng;

const UNIT: Scale = Scale { weight: 1.0, bias: 1.0 };

fn random_params(n: usize, nh: usize, seed: u64) -> RbmParams {
    let mut r = rng::stream(seed, 1);
    let mut u = || r.random_range(-1.0..1.0);
    RbmParams {
        weights: DMatrix::from_fn(n, nh, |_, _| u()),
        visible_bias: (0..n).map(|_| u()).collect(),
        hidden_bias: (0..nh).map(|_| u()).collect(),
    }
}

fn exact_energy(params: &RbmParams, spec: &TfimSpec) -> f64 {
    let p = exact_marginal(params).unwrap().probabilities;
    variational_energy(&p, spec, 1e-12, None).unwrap().energy
}

fn finite_difference(params: &RbmParams, spec: &TfimSpec, step: f64) -> Vec<f64> {
    let base = flatten(params);
    let (n, nh) = (params.n_visible(), params.n_hidden());
    let at = |values: &[f64]| RbmParams {
        weights: DMatrix::from_row_slice(n, nh, &values[..n * nh]),
        visible_bias: values[n * nh..n * nh + n].to_vec(),
        hidden_bias: values[n * nh + n..].to_vec(),
    };
    (0..base.len())
        .map(|k| {
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus[k] += step;
            minus[k] -= step;
            (exact_energy(&at(&plus), spec) - exact_energy(&at(&minus), spec)) / (2.0 * step)
        })
        .collect()
}

fn exact_gradient(params: &RbmParams, spec: &TfimSpec) -> GradientEstimate {
    let mut backend = ExactBackend { scale: UNIT };
    let request = SampleRequest { n_samples: 1, runs: 1, seed: 0 };
    let samples = backend.sample(params, &request).unwrap();
    estimate_gradient(&samples, spec, 1e-12).unwrap()
}

fn assert_matches_fd(params: &RbmParams, spec: &TfimSpec) {
    let g = exact_gradient(params, spec).flatten();
    let fd = finite_difference(params, spec, 1e-5);
    for (k, (a, b)) in g.iter().zip(&fd).enumerate() {
        assert!((a - b).abs() <= 1e-4 * b.abs() + 1e-9, "component {k}: {a} vs {b}");
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let spec = TfimSpec::new(3, 1.0, 0.7).unwrap();
    assert_matches_fd(&random_params(3, 2, 11), &spec);
}

#[test]
fn repeated_single_sample_has_zero_gradient() {
    let spec = TfimSpec::new(4, 1.0, 1.0).unwrap();
    let row = [1u8, 0, 1, 1, 0, 1];
    let rows: Vec<u8> = (0..50).flat_map(|_| row).collect();
    let samples = StateSamples::from_rows(4, 2, rows).unwrap();
    let g = estimate_gradient(&samples, &spec, 1e-12).unwrap();
    assert!(g.flatten().iter().all(|&x| x == 0.0));
    assert_eq!(g.n_samples, 50);
}

#[test]
fn ground_distribution_is_stationary() {
    let spec = TfimSpec::new(4, 1.0, 1.0).unwrap();
    let p0 = exact_ground_state(&spec).unwrap().probabilities();
    let mut r = rng::stream(3, 0);
    let mut rows = Vec::new();
    for v in 0..16usize {
        rows.extend((0..4).map(|i| ((v >> i) & 1) as u8));
        rows.extend((0..3).map(|_| r.random_range(0..2u8)));
    }
    let samples = StateSamples::from_rows(4, 3, rows).unwrap().with_weights(p0).unwrap();
    let g = estimate_gradient(&samples, &spec, 1e-12).unwrap();
    assert!(g.flatten().iter().all(|x| x.abs() < 1e-8), "{:?}", g.flatten());
}

#[test]
fn empty_samples_are_rejected() {
    let spec = TfimSpec::new(3, 1.0, 1.0).unwrap();
    assert!(estimate_gradient(&StateSamples::new(3, 2), &spec, 1e-12).is_err());
}

fn exact_config(iterations: usize, seed: u64) -> TrainingConfig {
    TrainingConfig {
        iterations,
        samples_per_iteration: 1,
        runs_per_iteration: 1,
        seed,
        ..TrainingConfig::default()
    }
}

#[test]
fn strong_field_is_learned_quickly() {
    let spec = TfimSpec::new(3, 1.0, 10.0).unwrap();
    let out = train(&spec, 5, &mut ExactBackend::default(), &exact_config(300, 0)).unwrap();
    assert!(out.failure.is_none());
    assert_eq!(out.trace.len(), 300);
    let best = out.trace.rows.iter().filter_map(|r| r.delta_e).fold(f64::INFINITY, f64::min);
    assert!(best < 1e-4, "best ΔE {best}");
}

#[test]
fn windowed_median_energy_does_not_increase() {
    let spec = TfimSpec::new(4, 1.0, 1.0).unwrap();
    let out = train(&spec, 6, &mut ExactBackend::default(), &exact_config(600, 5)).unwrap();
    let medians: Vec<f64> = out
        .trace
        .rows
        .chunks(100)
        .map(|w| {
            let mut e: Vec<f64> = w.iter().map(|r| r.energy).collect();
            e.sort_by(f64::total_cmp);
            e[e.len() / 2]
        })
        .collect();
    for pair in medians.windows(2) {
        assert!(pair[1] <= pair[0] + 1e-12, "{medians:?}");
    }
}

#[test]
fn resuming_from_a_checkpoint_is_seamless() {
    let spec = TfimSpec::new(3, 1.0, 1.0).unwrap();
    let straight = train(&spec, 4, &mut ExactBackend::default(), &exact_config(20, 2)).unwrap();

    let first = train(&spec, 4, &mut ExactBackend::default(), &exact_config(8, 2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.toml");
    first.checkpoint.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded, first.checkpoint);
    let resumed = Trainer::from_checkpoint(&spec, &exact_config(20, 2), &loaded)
        .unwrap()
        .run(&mut ExactBackend::default(), |_| {});
    assert_eq!(resumed.trace.rows.first().unwrap().iteration, 9);
    assert_eq!(resumed.params, straight.params);
}

#[test]
fn gibbs_training_is_reproducible() {
    let spec = TfimSpec::new(3, 1.0, 1.0).unwrap();
    let config = TrainingConfig {
        iterations: 5,
        samples_per_iteration: 3000,
        seed: 9,
        ..TrainingConfig::default()
    };
    let a = train(&spec, 4, &mut GibbsBackend::default(), &config).unwrap();
    let b = train(&spec, 4, &mut GibbsBackend::default(), &config).unwrap();
    assert_eq!(a.params, b.params);
    let energies = |o: &TrainingOutcome| o.trace.rows.iter().map(|r| r.energy).collect::<Vec<_>>();
    assert_eq!(energies(&a), energies(&b));
}

#[test]
fn trace_csv_has_one_row_per_iteration() {
    let spec = TfimSpec::new(3, 1.0, 1.0).unwrap();
    let out = train(&spec, 2, &mut ExactBackend::default(), &exact_config(4, 0)).unwrap();
    let mut buf = Vec::new();
    out.trace.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "iteration,E,dE,infidelity,dkl,flip_fraction");
    assert_eq!(lines.len(), 5);
}

/// Fails on selected calls and delegates to exact enumeration otherwise.
struct Flaky {
    inner: ExactBackend,
    calls: usize,
    failing: Vec<usize>,
}

impl SamplingBackend for Flaky {
    fn name(&self) -> &'static str {
        "flaky"
    }
    fn capability(&self) -> Capability {
        self.inner.capability()
    }
    fn scale(&self) -> Scale {
        self.inner.scale()
    }
    fn sample(&mut self, params: &RbmParams, request: &SampleRequest) -> Result<StateSamples> {
        self.calls += 1;
        if self.failing.contains(&self.calls) {
            return Err(Error::Backend(format!("call {}", self.calls)));
        }
        self.inner.sample(params, request)
    }
}

#[test]
fn failed_sampling_is_retried_once() {
    let spec = TfimSpec::new(3, 1.0, 1.0).unwrap();
    let mut flaky = Flaky { inner: ExactBackend::default(), calls: 0, failing: vec![2] };
    let out = train(&spec, 2, &mut flaky, &exact_config(4, 0)).unwrap();
    assert!(out.failure.is_none());
    assert_eq!(out.trace.len(), 4);

    let mut broken = Flaky { inner: ExactBackend::default(), calls: 0, failing: vec![3, 4] };
    let out = train(&spec, 2, &mut broken, &exact_config(4, 0)).unwrap();
    assert!(matches!(out.failure, Some(Error::Backend(_))));
    assert_eq!(out.trace.len(), 2);
}

#[test]
fn oversized_problem_aborts_before_sampling() {
    let spec = TfimSpec::new(4, 1.0, 1.0).unwrap();
    let out = train(&spec, 30, &mut ExactBackend::default(), &exact_config(3, 0)).unwrap();
    assert!(matches!(out.failure, Some(Error::Capacity { .. })));
    assert!(out.trace.is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn gradient_oracle_agreement(n in 3usize..=4, nh in 1usize..=3, seed in any::<u64>(), h in 0.2f64..3.0) {
        let spec = TfimSpec::new(n, 1.0, h).unwrap();
        assert_matches_fd(&random_params(n, nh, seed), &spec);
    }

    #[test]
    fn integer_backends_see_rounded_clipped_masters(seed in any::<u64>(), steps in 1usize..6) {
        let spec = TfimSpec::new(3, 1.0, 1.0).unwrap();
        let config = TrainingConfig {
            iterations: steps,
            samples_per_iteration: 500,
            runs_per_iteration: 1,
            learning_rate: 40.0,
            lr_decay: 1.0,
            init_weight_range: 63,
            seed,
            ..TrainingConfig::default()
        };
        let mut backend = GibbsBackend::default();
        backend.integer_weights = true;
        backend.burn_in = 10;
        let mut trainer = Trainer::new(&spec, 3, &config).unwrap();
        for _ in 0..steps {
            trainer.step(&mut backend).unwrap();
            let written = trainer.programmed(&backend);
            let master = trainer.params();
            for (w, m) in written.weights.iter().zip(master.weights.iter()) {
                prop_assert_eq!(*w, m.clamp(-63.0, 63.0).round());
                prop_assert!(w.abs() <= 63.0);
            }
            let row = trainer.trace().rows.last().unwrap();
            prop_assert!((0.0..=1.0).contains(&row.flip_fraction));
        }
    }
}
