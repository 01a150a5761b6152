//! End-to-end acceptance checks. Runs without the libtest harness so that every
//! check prints exactly one PASS/FAIL line; pass a substring to run a subset.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use neuroquansa::boltzmann::{dkl, exact_marginal, RbmParams};
use neuroquansa::hardware::{
    run_pseudo_update_experiment, run_resolution_experiment, run_stability_experiment, weight_grid, Curve,
    HardwareModel, PseudoUpdateOptions, ResolutionOptions, StabilityOptions, GRID_STEPS,
};
use neuroquansa::learner::{
    estimate_gradient, flatten, train, ExactBackend, GibbsBackend, SampleRequest, SamplingBackend, Scale, SnnBackend,
    TrainingConfig,
};
use neuroquansa::quantum::{
    exact_ground_state, fidelity, observables, spin, variational_energy, TfimSpec, DEFAULT_EPSILON,
};
use neuroquansa::rng;
use neuroquansa::snn::{calibrate, decode_window, simulate, CalibrationOptions, NetworkConfig};
use rand::Rng;

type Check = Result<String, String>;

fn verdict(pass: bool, detail: String) -> Check {
    if pass {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Free-fermion ground energy of the periodic chain.
fn jordan_wigner_e0(n: usize, j: f64, h: f64) -> f64 {
    -(0..n)
        .map(|m| {
            let k = (2 * m + 1) as f64 * PI / n as f64;
            (j * j + h * h - 2.0 * j * h * k.cos()).sqrt()
        })
        .sum::<f64>()
}

fn ed_oracle() -> Check {
    let mut worst: f64 = 0.0;
    for n in 3..=10 {
        for h in [0.5, 1.0, 2.0] {
            let e0 = exact_ground_state(&TfimSpec::new(n, 1.0, h).unwrap()).unwrap().energy;
            let oracle = jordan_wigner_e0(n, 1.0, h);
            worst = worst.max(((e0 - oracle) / oracle).abs());
        }
    }
    verdict(worst < 1e-9, format!("max relative error {worst:.2e} (limit 1e-9)"))
}

fn random_params(n: usize, nh: usize, seed: u64, scale: f64) -> RbmParams {
    let mut r = rng::stream(seed, 1);
    let mut u = || r.random_range(-scale..scale);
    RbmParams {
        weights: DMatrix::from_fn(n, nh, |_, _| u()),
        visible_bias: (0..n).map(|_| u()).collect(),
        hidden_bias: (0..nh).map(|_| u()).collect(),
    }
}

fn exact_energy(params: &RbmParams, spec: &TfimSpec) -> f64 {
    let p = exact_marginal(params).unwrap().probabilities;
    variational_energy(&p, spec, DEFAULT_EPSILON, None).unwrap().energy
}

fn gradient() -> Check {
    let unit = Scale { weight: 1.0, bias: 1.0 };
    let mut worst: f64 = 0.0;
    for case in 0..20u64 {
        let mut r = rng::stream(case, 9);
        let n = r.random_range(3..=4);
        let nh = r.random_range(1..=3);
        let spec = TfimSpec::new(n, 1.0, r.random_range(0.2..3.0)).unwrap();
        let params = random_params(n, nh, 100 + case, 1.0);
        let samples = ExactBackend { scale: unit }
            .sample(&params, &SampleRequest { n_samples: 1, runs: 1, seed: 0 })
            .unwrap();
        let g = estimate_gradient(&samples, &spec, DEFAULT_EPSILON).unwrap().flatten();
        let base = flatten(&params);
        let at = |v: &[f64]| RbmParams {
            weights: DMatrix::from_row_slice(n, nh, &v[..n * nh]),
            visible_bias: v[n * nh..n * nh + n].to_vec(),
            hidden_bias: v[n * nh + n..].to_vec(),
        };
        let step = 1e-5;
        for k in 0..base.len() {
            let (mut plus, mut minus) = (base.clone(), base.clone());
            plus[k] += step;
            minus[k] -= step;
            let fd = (exact_energy(&at(&plus), &spec) - exact_energy(&at(&minus), &spec)) / (2.0 * step);
            let rel = (g[k] - fd).abs() / fd.abs().max(1e-5);
            worst = worst.max(rel);
        }
    }
    verdict(worst < 1e-4, format!("20 instances, max relative error {worst:.2e} (limit 1e-4)"))
}

fn gibbs_learning_run(n: usize, nh: usize, limit: f64) -> (bool, String) {
    let spec = TfimSpec::new(n, 1.0, 1.0).unwrap();
    let config = TrainingConfig {
        samples_per_iteration: 200_000,
        seed: 0,
        ..TrainingConfig::default()
    };
    let mut backend = GibbsBackend::default();
    let outcome = train(&spec, nh, &mut backend, &config).unwrap();
    let infidelity = outcome.trace.tail_median(200, |r| r.infidelity).unwrap();
    let de = outcome.trace.tail_median(200, |r| r.delta_e).unwrap();
    (
        infidelity < limit && outcome.failure.is_none(),
        format!("N={n} N_h={nh}: median 1-F {infidelity:.2e} (limit {limit:.0e}), median dE {de:.2e}"),
    )
}

fn gibbs_learning() -> Check {
    let (a, da) = gibbs_learning_run(8, 20, 1e-2);
    let (b, db) = gibbs_learning_run(6, 10, 1e-3);
    verdict(a && b, format!("{da}; {db}"))
}

fn phase_transition() -> Check {
    let fields = [0.1, 0.5, 0.9, 1.0, 1.25, 5.0, 10.0];
    let mut xi = Vec::new();
    let mut sx = Vec::new();
    for h in fields {
        let spec = TfimSpec::new(8, 1.0, h).unwrap();
        let obs = observables(&exact_ground_state(&spec).unwrap().probabilities(), &spec, DEFAULT_EPSILON).unwrap();
        xi.push(obs.correlation_fit.filter(|f| f.identifiable).map_or(f64::NAN, |f| f.xi));
        sx.push(obs.magnetization_x);
    }
    let peak = (0..fields.len()).filter(|&i| xi[i].is_finite()).max_by(|&a, &b| xi[a].total_cmp(&xi[b])).unwrap();
    let monotone = sx.windows(2).all(|w| w[1] > w[0]);
    verdict(
        (3..=5).contains(&peak) && monotone && sx[6] > 0.99,
        format!("xi peaks at h/J = {}, <sigma_x> monotone: {monotone}, <sigma_x>(10) = {:.4}", fields[peak], sx[6]),
    )
}

fn magnetization(p: &[f64], n: usize) -> f64 {
    (0..p.len()).map(|v| p[v] * (0..n).map(|i| spin(v, i)).sum::<f64>()).sum::<f64>() / n as f64
}

fn symmetry_breaking() -> Check {
    // Training seed; the network and its calibration use seed 0.
    let (n, nh, seed) = (3, 4, 3);
    let spec = TfimSpec::new(n, 1.0, 0.1).unwrap();
    let network = NetworkConfig::new(n, nh, 0);
    let calibration = calibrate(&network, &CalibrationOptions::default()).unwrap();
    let backend = SnnBackend::new(network, calibration).unwrap();
    let gs = exact_ground_state(&spec).unwrap();
    let runs: Vec<Vec<f64>> = [0.0, -2.0]
        .iter()
        .map(|&offset| {
            let config = TrainingConfig {
                iterations: 150,
                samples_per_iteration: 4000,
                runs_per_iteration: 1,
                bias_init_offset: offset,
                seed,
                ..TrainingConfig::default()
            };
            train(&spec, nh, &mut backend.clone(), &config).unwrap().last_distribution
        })
        .collect();
    let m: Vec<f64> = runs.iter().map(|p| magnetization(p, n)).collect();
    let average: Vec<f64> = (0..runs[0].len()).map(|v| 0.5 * (runs[0][v] + runs[1][v])).collect();
    let f: Vec<f64> = runs.iter().map(|p| fidelity(p, &gs).unwrap()).collect();
    let fa = fidelity(&average, &gs).unwrap();
    let gain = fa - f[0].max(f[1]);
    verdict(
        m[0] * m[1] < 0.0 && gain >= 0.05,
        format!(
            "m(db=0) = {:+.3}, m(db=-2) = {:+.3}; F runs {:.3}/{:.3}, F average {fa:.3} (gain {gain:.3}, need 0.05)",
            m[0], m[1], f[0], f[1]
        ),
    )
}

fn resolution() -> Check {
    // Clipping the edges to ±63 merges them with their neighbours when Δw = 1.
    let sizes: Vec<usize> = GRID_STEPS.iter().map(|&dw| weight_grid(dw).unwrap().len()).collect();
    let grids_ok = GRID_STEPS
        .iter()
        .zip(&sizes)
        .all(|(&dw, &len)| len == if dw == 1 { 127 } else { (128 / dw + 1) as usize });
    let rows = run_resolution_experiment(|| Ok(GibbsBackend::default()), &ResolutionOptions::default()).unwrap();
    let d: Vec<f64> = rows.iter().map(|r| r.dkl_mean).collect();
    let monotone = d.windows(2).all(|w| w[1] > w[0]);
    let plateau = d[1] <= 2.0 * d[0];
    let listing: Vec<String> = rows.iter().map(|r| format!("{}:{:.2e}", r.step, r.dkl_mean)).collect();
    verdict(
        grids_ok && monotone && plateau,
        format!("grid sizes {sizes:?}, monotone: {monotone}, D(2) <= 2 D(1): {plateau} [{}]", listing.join(" ")),
    )
}

fn log_slope(curve: &Curve, from: f64, to: f64) -> f64 {
    let pts: Vec<(f64, f64)> = curve
        .points
        .iter()
        .filter(|p| p.x >= from && p.x <= to)
        .map(|p| (p.x.ln(), p.dkl_mean.ln()))
        .collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>()
}

fn stability() -> Check {
    let stable = StabilityOptions {
        repeats: 8,
        duration: 10.0,
        model: HardwareModel::stable(),
        ..StabilityOptions::default()
    };
    let quiet = run_stability_experiment(|| Ok(GibbsBackend::default()), &stable).unwrap();
    let slope = log_slope(&quiet.run_average, 0.1, 1.0);

    let drifting = StabilityOptions {
        duration: 1.0,
        model: HardwareModel::default(),
        ..stable.clone()
    };
    let drift = run_stability_experiment(|| Ok(GibbsBackend::default()), &drifting).unwrap();
    let at = |c: &Curve, t: f64| c.points.iter().find(|p| p.x >= t).unwrap().dkl_mean;
    let floor = at(&quiet.run_average, 1.0);
    let last = drift.run_average.final_value();
    // Drop over the last decade of sampling time: about 10x without drift, little with it.
    let drift_drop = at(&drift.run_average, 0.1) / last;
    let quiet_drop = at(&quiet.run_average, 0.1) / floor;
    let saturated = drift_drop < 1.5 && quiet_drop > 5.0;

    let pseudo = run_pseudo_update_experiment(|| Ok(GibbsBackend::default()), &PseudoUpdateOptions::default()).unwrap();
    let plateau = |c: &Curve| c.points.iter().rev().take(3).map(|p| p.dkl_mean).sum::<f64>() / 3.0;
    let (low, high) = (plateau(&pseudo.curves[0]), plateau(&pseudo.curves[1]));

    verdict(
        (slope + 1.0).abs() <= 0.2 && saturated && last > 5.0 * floor && low < high,
        format!(
            "no-drift slope {slope:.2}; drift floor {last:.2e} vs no-drift {floor:.2e} at 1 s, \
             drop over 0.1..1 s {drift_drop:.2}x with drift vs {quiet_drop:.1}x without; \
             pseudo-update plateau {low:.2e} (2.5%) vs {high:.2e} (10%)"
        ),
    )
}

fn snn_fidelity() -> Check {
    let mut details = Vec::new();
    let mut pass = true;
    for (case, (n, nh)) in [(3usize, 3usize), (4, 4), (5, 5)].into_iter().enumerate() {
        let seed = 40 + case as u64;
        let network = NetworkConfig::new(n, nh, seed);
        let calibration = calibrate(&network, &CalibrationOptions { seed, ..CalibrationOptions::default() }).unwrap();
        let gamma = calibration.mean_weight_factor();
        let mut backend = SnnBackend::new(network, calibration).unwrap();
        let target = random_params(n, nh, seed, 1.0);
        let hardware = RbmParams {
            weights: target.weights.map(|w| (w / gamma).round()),
            visible_bias: target.visible_bias.iter().map(|b| (b / backend.bias_scale).round()).collect(),
            hidden_bias: target.hidden_bias.iter().map(|b| (b / backend.bias_scale).round()).collect(),
        };
        let realized = backend.calibration.abstract_params(&backend.program(&hardware).unwrap()).unwrap();
        let max_w = realized.weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
        let samples = backend
            .sample(&hardware, &SampleRequest { n_samples: 1_000_000, runs: 1, seed })
            .unwrap();
        let empirical = samples.visible_histogram().unwrap().probabilities();
        let d = dkl(&empirical, &exact_marginal(&realized).unwrap().probabilities).unwrap();
        pass &= d < 0.05 && max_w <= 1.0 + gamma;
        details.push(format!("{n}+{nh}: D_KL {d:.3e}"));
    }

    let mut zero = NetworkConfig::new(2, 2, 11);
    zero.biases = vec![-0.5, 0.0, 0.5, -1.0];
    let record = simulate(&zero, 2.0e6, 5).unwrap();
    let states = decode_window(&record, &zero, 2.0, 20.0).unwrap();
    let count = states.len() as f64;
    let means = states.unit_means();
    let mut worst: f64 = 0.0;
    for i in 0..4 {
        for j in i + 1..4 {
            let joint = states.rows().filter(|r| r[i] == 1 && r[j] == 1).count() as f64 / count;
            let sigma = (joint * (1.0 - joint) / count).sqrt();
            worst = worst.max((joint - means[i] * means[j]).abs() / sigma);
        }
    }
    pass &= worst < 5.0;
    details.push(format!("zero-weight pairs within {worst:.2} sigma"));
    verdict(pass, details.join(", "))
}

fn main() -> ExitCode {
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let checks: &[(&str, fn() -> Check)] = &[
        ("exact diagonalization vs free fermions", ed_oracle),
        ("gradient vs finite differences", gradient),
        ("ground-state learning on the Gibbs backend", gibbs_learning),
        ("phase transition on exact ground states", phase_transition),
        ("symmetry breaking", symmetry_breaking),
        ("weight resolution", resolution),
        ("stability, drift and pseudo-updates", stability),
        ("spiking sampler fidelity", snn_fidelity),
    ];
    let mut failed = 0;
    for &(name, check) in checks {
        if filter.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {name}: {detail} [{secs:.0} s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} [{secs:.0} s]");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
