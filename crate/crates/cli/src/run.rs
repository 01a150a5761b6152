//! One function per experiment kind. Each writes its files into the output
//! directory and returns the summary lines.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use neuroquansa::boltzmann::{dkl, exact_marginal, write_distribution_csv, RbmParams};
use neuroquansa::config::{size_sweep_settings, BackendKind, ExperimentConfig, ExperimentKind};
use neuroquansa::hardware::experiments::write_resolution_csv;
use neuroquansa::hardware::{
    run_pseudo_update_experiment, run_resolution_experiment, run_stability_experiment, Curve,
};
use neuroquansa::learner::{
    quantize, Checkpoint, ExactBackend, GibbsBackend, SampleRequest, SamplingBackend, Scale, SnnBackend, Trainer,
    TrainingConfig, TrainingTrace, WeightDomain,
};
use neuroquansa::par::{self, Execution};
use neuroquansa::quantum::{
    exact_ground_state, fidelity, magnetization_histogram, observables, variational_energy, write_observables_csv,
    GroundStateSolution, ObservableRow, TfimSpec,
};
use neuroquansa::snn::{calibrate, CalibrationMap, NetworkConfig};

use crate::output::{sha256_hex, Manifest, OutputDir};
use crate::{Cli, Failure};

/// Iterations over which final medians are taken.
const TAIL: usize = 200;

type Summary = Vec<(String, String)>;

fn line(summary: &mut Summary, key: &str, value: impl ToString) {
    summary.push((key.to_string(), value.to_string()));
}

pub fn run(cli: &Cli, config: ExperimentConfig) -> Result<(), Failure> {
    let kind = cli.kind;
    let seed = config.seed.unwrap_or(0);
    let root = config
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("results").join(kind.as_str()));
    let mut out = OutputDir::create(&root)?;
    // The output location is not an input of the experiment.
    let resolved = ExperimentConfig { out: None, ..config.clone() }.to_toml();
    out.write("config.toml", resolved.as_bytes())?;

    let start = Instant::now();
    let mut summary = Summary::new();
    let result = match kind {
        ExperimentKind::Train => train(cli, &config, seed, &mut out, &mut summary),
        ExperimentKind::Sample => sample(&config, seed, &mut out, &mut summary),
        ExperimentKind::Calibrate => calibrate_kind(&config, seed, &mut out, &mut summary),
        ExperimentKind::PhaseSweep => phase_sweep(&config, seed, &mut out, &mut summary),
        ExperimentKind::SizeSweep => size_sweep(&config, seed, &mut out, &mut summary),
        ExperimentKind::Resolution => resolution(&config, seed, &mut out, &mut summary),
        ExperimentKind::PseudoUpdate => pseudo_update(&config, seed, &mut out, &mut summary),
        ExperimentKind::Stability => stability(&config, seed, &mut out, &mut summary),
        ExperimentKind::Diag => diag(&config, &mut out, &mut summary),
    };
    log::info!("{kind} finished in {:.1} s", start.elapsed().as_secs_f64());

    let mut text = String::new();
    let _ = writeln!(text, "kind: {kind}");
    for (k, v) in &summary {
        let _ = writeln!(text, "{k}: {v}");
    }
    if let Err(e) = &result {
        let _ = writeln!(text, "error: {e:#}");
    }
    print!("{text}");
    out.write("summary.txt", text.as_bytes())?;
    let manifest = Manifest {
        tool: "neuroquansa".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        kind: kind.to_string(),
        backend: backend_label(config.backend).into(),
        status: if result.is_ok() { "ok" } else { "failed" }.into(),
        error: result.as_ref().err().map(|e| format!("{e:#}")),
        config_hash: sha256_hex(resolved.as_bytes()),
        seeds: vec![seed],
        files: Vec::new(),
    };
    let path = out.finish(manifest)?;
    log::info!("manifest written to {}", path.display());
    result.map_err(Failure::Runtime)
}

fn backend_label(kind: BackendKind) -> &'static str {
    match kind {
        BackendKind::Snn => "snn",
        BackendKind::Gibbs => "gibbs",
        BackendKind::Exact => "exact",
    }
}

/// A configured backend that can hand out fresh instances.
#[derive(Clone)]
enum Prototype {
    Exact(ExactBackend),
    Gibbs(GibbsBackend),
    Snn(Box<SnnBackend>),
}

impl Prototype {
    fn instance(&self) -> Box<dyn SamplingBackend> {
        match self {
            Prototype::Exact(b) => Box::new(b.clone()),
            Prototype::Gibbs(b) => Box::new(b.clone()),
            Prototype::Snn(b) => Box::new((**b).clone()),
        }
    }

    fn calibration(&self) -> Option<&CalibrationMap> {
        match self {
            Prototype::Snn(b) => Some(&b.calibration),
            _ => None,
        }
    }
}

fn abstract_scale(config: &ExperimentConfig) -> Scale {
    Scale {
        weight: config.gibbs.weight_scale,
        bias: config.gibbs.bias_scale,
    }
}

fn spiking_network(config: &ExperimentConfig, n: usize, nh: usize, seed: u64) -> NetworkConfig {
    let net = &config.network;
    let mut network = NetworkConfig::with_neuron(n, nh, net.neuron, net.noise, seed);
    network.weight_unit = net.weight_unit;
    network
}

fn load_calibration(path: &Path) -> Result<CalibrationMap> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("{} is not a calibration file", path.display()))
}

fn measure_calibration(config: &ExperimentConfig, network: &NetworkConfig, seed: u64) -> Result<CalibrationMap> {
    if let Some(path) = &config.network.calibration_file {
        let map = load_calibration(path)?;
        ensure!(
            map.n_neurons() == network.n_neurons(),
            "{} covers {} neurons, the network has {}",
            path.display(),
            map.n_neurons(),
            network.n_neurons()
        );
        return Ok(map);
    }
    let mut options = config.calibration;
    options.seed = seed;
    let start = Instant::now();
    let map = calibrate(network, &options)?;
    log::info!("calibrated {} neurons in {:.1} s", network.n_neurons(), start.elapsed().as_secs_f64());
    Ok(map)
}

fn prototype(config: &ExperimentConfig, n: usize, nh: usize, seed: u64) -> Result<Prototype> {
    Ok(match config.backend {
        BackendKind::Exact => Prototype::Exact(ExactBackend {
            scale: abstract_scale(config),
        }),
        BackendKind::Gibbs => {
            let g = &config.gibbs;
            let mut b = GibbsBackend::default();
            b.scale = abstract_scale(config);
            b.burn_in = g.burn_in;
            b.warm_burn_in = g.warm_burn_in;
            b.thinning = g.thinning;
            b.integer_weights = g.integer_weights;
            Prototype::Gibbs(b)
        }
        BackendKind::Snn => {
            let network = spiking_network(config, n, nh, seed);
            let calibration = measure_calibration(config, &network, seed)?;
            let mut b = SnnBackend::new(network, calibration)?;
            b.bias_scale = config.network.bias_scale;
            if let Some(dt) = config.network.readout_interval {
                b.readout_interval = dt;
            }
            if let Some(t) = config.network.burn_in {
                b.burn_in = t;
            }
            Prototype::Snn(Box::new(b))
        }
    })
}

fn tag(x: f64) -> String {
    format!("{x}").replace('.', "p")
}

/// Everything one training run produces.
struct TrainRun {
    trace: TrainingTrace,
    checkpoint: Checkpoint,
    distribution: Vec<f64>,
    failure: Option<neuroquansa::Error>,
}

fn training_config(config: &ExperimentConfig, samples: usize, seed: u64) -> TrainingConfig {
    TrainingConfig {
        samples_per_iteration: samples,
        seed,
        ..config.training
    }
}

/// Trains on `spec`; `on_iteration` sees the trainer after every completed step.
fn train_run(
    config: &ExperimentConfig,
    spec: &TfimSpec,
    nh: usize,
    samples: usize,
    seed: u64,
    resume: Option<&Checkpoint>,
    mut on_iteration: impl FnMut(&Trainer) -> Result<()>,
) -> Result<TrainRun> {
    let tc = training_config(config, samples, seed);
    let mut trainer = match resume {
        Some(c) => Trainer::from_checkpoint(spec, &tc, c)?,
        None => Trainer::new(spec, nh, &tc)?,
    };
    let mut backend = prototype(config, spec.n_spins, nh, seed)?.instance();
    backend.capability().check(spec.n_spins, nh)?;
    let mut failure = None;
    let mut last = Vec::new();
    while trainer.iteration() < tc.iterations {
        match trainer.step(backend.as_mut()) {
            Ok(row) => {
                if row.iteration % 100 == 0 {
                    log::info!(
                        "N={} h={} iteration {}: E = {:.6}, dE = {}",
                        spec.n_spins,
                        spec.field,
                        row.iteration,
                        row.energy,
                        row.delta_e.map_or("-".into(), |d| format!("{d:.3e}"))
                    );
                }
                on_iteration(&trainer)?;
            }
            Err(e) => {
                log::error!("training stopped at iteration {}: {e}", trainer.iteration() + 1);
                failure = Some(e);
                break;
            }
        }
    }
    if trainer.iteration() > 0 {
        last = trainer.last_distribution().to_vec();
    }
    Ok(TrainRun {
        trace: trainer.trace().clone(),
        checkpoint: trainer.checkpoint(),
        distribution: last,
        failure,
    })
}

fn write_checkpoint(out: &mut OutputDir, name: &str, checkpoint: &Checkpoint) -> Result<()> {
    let text = toml::to_string(checkpoint).context("cannot serialize checkpoint")?;
    out.write(name, text.as_bytes())
}

fn tail_summary(summary: &mut Summary, trace: &TrainingTrace) {
    line(summary, "iterations", trace.len());
    if let Some(row) = trace.rows.last() {
        line(summary, "final_energy", row.energy);
    }
    if let Some(v) = trace.tail_median(TAIL, |r| r.delta_e) {
        line(summary, "median_delta_e_last_200", format!("{v:.3e}"));
    }
    if let Some(v) = trace.tail_median(TAIL, |r| r.infidelity) {
        line(summary, "median_infidelity_last_200", format!("{v:.3e}"));
    }
    if let Some(v) = trace.tail_median(TAIL, |r| r.dkl) {
        line(summary, "median_dkl_last_200", format!("{v:.3e}"));
    }
    line(
        summary,
        "median_flip_fraction_last_200",
        format!("{:.4}", trace.tail_median(TAIL, |r| Some(r.flip_fraction)).unwrap_or(0.0)),
    );
}

fn train(cli: &Cli, config: &ExperimentConfig, seed: u64, out: &mut OutputDir, summary: &mut Summary) -> Result<()> {
    let spec = config.system.spec();
    let resume = cli.resume.as_deref().map(Checkpoint::load).transpose()?;
    let nh = resume.as_ref().map_or_else(|| config.n_hidden_for(config.system.field), |c| c.n_hidden);
    let samples = config.samples_for(config.system.field);
    line(summary, "system", format!("N={} J={} h={}", spec.n_spins, spec.coupling, spec.field));
    line(summary, "n_hidden", nh);
    line(summary, "samples_per_iteration", samples);
    let every = cli.checkpoint_every;
    let run = train_run(config, &spec, nh, samples, seed, resume.as_ref(), |trainer| {
        if every.is_some_and(|k| trainer.iteration() % k == 0) {
            write_checkpoint(out, "checkpoint.toml", &trainer.checkpoint())?;
        }
        Ok(())
    });
    let run = run?;
    out.write_with("trace.csv", |b| run.trace.write_csv(b))?;
    write_checkpoint(out, "checkpoint.toml", &run.checkpoint)?;
    if !run.distribution.is_empty() {
        out.write_with("distribution.csv", |b| write_distribution_csv(&run.distribution, b))?;
    }
    line(summary, "final_iteration", run.checkpoint.iteration);
    tail_summary(summary, &run.trace);
    if let Some(best) = run.trace.rows.iter().filter_map(|r| r.delta_e).reduce(f64::min) {
        line(summary, "best_delta_e", format!("{best:.3e}"));
    }
    match run.failure {
        Some(e) => Err(e).context("training aborted"),
        None => Ok(()),
    }
}

fn sample(config: &ExperimentConfig, seed: u64, out: &mut OutputDir, summary: &mut Summary) -> Result<()> {
    let spec = config.system.spec();
    let params = match &config.sample.checkpoint {
        Some(path) => Checkpoint::load(path)?.params()?,
        None => {
            let tc = training_config(config, config.sample.n_samples, seed);
            Trainer::new(&spec, config.n_hidden_for(config.system.field), &tc)?.params().clone()
        }
    };
    let (n, nh) = (params.n_visible(), params.n_hidden());
    let proto = prototype(config, n, nh, seed)?;
    let mut backend = proto.instance();
    let programmed = match backend.capability().weight_domain {
        WeightDomain::Integer { .. } => quantize(&params, config.training.bias_clip),
        WeightDomain::Continuous => params.clone(),
    };
    let request = SampleRequest {
        n_samples: config.sample.n_samples,
        runs: config.sample.runs,
        seed,
    };
    let start = Instant::now();
    let samples = backend.sample(&programmed, &request)?;
    line(summary, "samples", samples.len());
    line(summary, "layers", format!("{n} visible, {nh} hidden"));
    log::info!("sampled in {:.1} s", start.elapsed().as_secs_f64());
    let empirical = samples.visible_histogram()?.probabilities();
    out.write_with("states.csv", |b| samples.write_csv(b))?;
    out.write_with("distribution.csv", |b| write_distribution_csv(&empirical, b))?;

    let target: RbmParams = match (&proto, proto.calibration()) {
        (Prototype::Snn(b), Some(cal)) => cal.abstract_params(&b.program(&programmed)?)?,
        _ => backend.scale().to_abstract(&programmed),
    };
    let exact = exact_marginal(&target)?.probabilities;
    out.write_with("exact_distribution.csv", |b| write_distribution_csv(&exact, b))?;
    line(summary, "dkl_to_exact_marginal", format!("{:.4e}", dkl(&empirical, &exact)?));
    Ok(())
}

fn calibrate_kind(config: &ExperimentConfig, seed: u64, out: &mut OutputDir, summary: &mut Summary) -> Result<()> {
    let n = config.system.n_spins;
    let nh = config.n_hidden_for(config.system.field);
    let network = spiking_network(config, n, nh, seed);
    let map = measure_calibration(config, &network, seed)?;
    let mut text = String::from("neuron,u0,alpha,weight_factor,input_offset,residual\n");
    for k in 0..map.n_neurons() {
        let f = map.fits[k];
        let _ = writeln!(
            text,
            "{k},{},{},{},{},{}",
            f.u0, f.alpha, map.weight_factors[k], map.input_offsets[k], f.residual
        );
    }
    out.write("calibration.csv", text.as_bytes())?;
    out.write("calibration.toml", toml::to_string(&map)?.as_bytes())?;
    out.write("network.toml", network.to_toml()?.as_bytes())?;
    let mean = |f: &dyn Fn(usize) -> f64| (0..map.n_neurons()).map(f).sum::<f64>() / map.n_neurons() as f64;
    line(summary, "neurons", map.n_neurons());
    line(summary, "mean_u0", format!("{:.4}", mean(&|k| map.fits[k].u0)));
    line(summary, "mean_alpha", format!("{:.4}", mean(&|k| map.fits[k].alpha)));
    line(summary, "mean_weight_factor", format!("{:.5}", map.mean_weight_factor()));
    line(summary, "mean_input_offset", format!("{:.5}", mean(&|k| map.input_offsets[k])));
    Ok(())
}

fn observable_row(h_over_j: f64, p: &[f64], spec: &TfimSpec, gs: &GroundStateSolution, eps: f64) -> Result<ObservableRow> {
    let obs = observables(p, spec, eps)?;
    let energy = variational_energy(p, spec, eps, Some(gs.energy))?;
    let fit = obs.correlation_fit.filter(|f| f.identifiable);
    Ok(ObservableRow {
        h_over_j,
        sigma_x: obs.magnetization_x,
        xi: fit.map_or(f64::NAN, |f| f.xi),
        xi_err: fit.map_or(f64::NAN, |f| f.xi_err),
        czz_nn: obs.czz[1],
        energy: energy.energy,
        delta_e: energy.delta_e.unwrap_or(f64::NAN),
        infidelity: 1.0 - fidelity(p, gs)?,
    })
}

fn magnetization_csv(trained: Option<&[f64]>, exact: &[f64], n: usize) -> Vec<u8> {
    let ex = magnetization_histogram(exact, n);
    let tr = trained.map(|p| magnetization_histogram(p, n));
    let mut text = String::from("m,p_exact,p_trained\n");
    for (k, (m, pe)) in ex.iter().enumerate() {
        let pt = tr.as_ref().map_or(String::new(), |t| t[k].1.to_string());
        let _ = writeln!(text, "{m},{pe},{pt}");
    }
    text.into_bytes()
}

fn phase_sweep(config: &ExperimentConfig, seed: u64, out: &mut OutputDir, summary: &mut Summary) -> Result<()> {
    let fields = &config.phase_sweep.fields;
    let n = config.system.n_spins;
    let eps = config.training.epsilon;
    let points = par::map_indexed(Execution::Parallel, fields.len(), |i| -> Result<_> {
        let h = fields[i];
        let spec = config.system.spec_at(n, h);
        let gs = exact_ground_state(&spec)?;
        let exact_row = observable_row(h, &gs.probabilities(), &spec, &gs, eps)?;
        let trained = if config.phase_sweep.train {
            let nh = config.n_hidden_for(h);
            let run = train_run(config, &spec, nh, config.samples_for(h), seed, None, |_| Ok(()))?;
            Some((nh, run))
        } else {
            None
        };
        Ok((spec, gs, exact_row, trained))
    });

    let mut exact_rows = Vec::new();
    let mut trained_rows = Vec::new();
    let mut failures = Vec::new();
    for (i, point) in points.into_iter().enumerate() {
        let h = fields[i];
        let (spec, gs, exact_row, trained) = point.with_context(|| format!("h/J = {h}"))?;
        exact_rows.push(exact_row);
        let mut distribution = None;
        if let Some((nh, run)) = trained {
            out.write_with(&format!("trace_h{}.csv", tag(h)), |b| run.trace.write_csv(b))?;
            write_checkpoint(out, &format!("checkpoint_h{}.toml", tag(h)), &run.checkpoint)?;
            if let Some(e) = run.failure {
                failures.push(format!("h/J = {h}: {e}"));
            }
            if !run.distribution.is_empty() {
                trained_rows.push(observable_row(h, &run.distribution, &spec, &gs, eps)?);
                line(
                    summary,
                    &format!("h={h}"),
                    format!(
                        "N_h={nh} median dE={:.3e} median 1-F={:.3e}",
                        run.trace.tail_median(TAIL, |r| r.delta_e).unwrap_or(f64::NAN),
                        run.trace.tail_median(TAIL, |r| r.infidelity).unwrap_or(f64::NAN)
                    ),
                );
                distribution = Some(run.distribution);
            }
        }
        out.write(
            &format!("magnetization_h{}.csv", tag(h)),
            &magnetization_csv(distribution.as_deref(), &gs.probabilities(), spec.n_spins),
        )?;
    }
    out.write_with("observables_exact.csv", |b| write_observables_csv(&exact_rows, b))?;
    if !trained_rows.is_empty() {
        out.write_with("observables_trained.csv", |b| write_observables_csv(&trained_rows, b))?;
    }
    line(summary, "fields", fields.len());
    if let Some(peak) = exact_rows.iter().filter(|r| r.xi.is_finite()).max_by(|a, b| a.xi.total_cmp(&b.xi)) {
        line(summary, "exact_xi_peak_h", peak.h_over_j);
    }
    if !failures.is_empty() {
        bail!("{} training runs failed: {}", failures.len(), failures.join("; "));
    }
    Ok(())
}

fn size_sweep(config: &ExperimentConfig, seed: u64, out: &mut OutputDir, summary: &mut Summary) -> Result<()> {
    let sizes = &config.size_sweep.sizes;
    let h = config.system.field;
    let sample_default = TrainingConfig::default().samples_per_iteration;
    let runs = par::map_indexed(Execution::Parallel, sizes.len(), |i| -> Result<_> {
        let n = sizes[i];
        let (table_nh, table_samples) = size_sweep_settings(n);
        let nh = config.system.n_hidden.unwrap_or(table_nh);
        let samples = if config.training.samples_per_iteration == sample_default {
            table_samples
        } else {
            config.training.samples_per_iteration
        };
        let spec = config.system.spec_at(n, h);
        Ok((nh, samples, train_run(config, &spec, nh, samples, seed, None, |_| Ok(()))?))
    });
    let mut text = String::from("n_spins,n_hidden,samples,delta_e,infidelity,dkl\n");
    let mut failures = Vec::new();
    for (i, run) in runs.into_iter().enumerate() {
        let n = sizes[i];
        let (nh, samples, run) = run.with_context(|| format!("N = {n}"))?;
        out.write_with(&format!("trace_N{n}.csv"), |b| run.trace.write_csv(b))?;
        write_checkpoint(out, &format!("checkpoint_N{n}.toml"), &run.checkpoint)?;
        let med = |f: fn(&neuroquansa::learner::TraceRow) -> Option<f64>| {
            run.trace.tail_median(TAIL, f).unwrap_or(f64::NAN)
        };
        let (de, inf, d) = (med(|r| r.delta_e), med(|r| r.infidelity), med(|r| r.dkl));
        let _ = writeln!(text, "{n},{nh},{samples},{de},{inf},{d}");
        line(summary, &format!("N={n}"), format!("N_h={nh} median dE={de:.3e} median 1-F={inf:.3e}"));
        if let Some(e) = run.failure {
            failures.push(format!("N = {n}: {e}"));
        }
    }
    out.write("size_sweep.csv", text.as_bytes())?;
    if !failures.is_empty() {
        bail!("{} training runs failed: {}", failures.len(), failures.join("; "));
    }
    Ok(())
}

fn experiment_prototype(config: &ExperimentConfig, n: usize, nh: usize, seed: u64) -> Result<Prototype> {
    if config.backend == BackendKind::Exact {
        bail!("hardware experiments need a sampling backend (snn or gibbs)");
    }
    prototype(config, n, nh, seed)
}

fn resolution(config: &ExperimentConfig, seed: u64, out: &mut OutputDir, summary: &mut Summary) -> Result<()> {
    let mut options = config.resolution.clone();
    options.seed = seed;
    let proto = experiment_prototype(config, options.n_visible, options.n_hidden, seed)?;
    let rows = run_resolution_experiment(|| Ok(proto.instance()), &options)?;
    out.write_with("resolution.csv", |b| write_resolution_csv(&rows, b))?;
    for r in &rows {
        line(summary, &format!("dw={}", r.step), format!("{:.4e} ± {:.1e}", r.dkl_mean, r.dkl_std));
    }
    Ok(())
}

fn write_curve(out: &mut OutputDir, name: &str, curve: &Curve) -> Result<()> {
    out.write_with(name, |b| curve.write_csv("t", b))
}

fn pseudo_update(config: &ExperimentConfig, seed: u64, out: &mut OutputDir, summary: &mut Summary) -> Result<()> {
    let mut options = config.pseudo_update.clone();
    options.seed = seed;
    let proto = experiment_prototype(config, options.n_visible, options.n_hidden, seed)?;
    let result = run_pseudo_update_experiment(|| Ok(proto.instance()), &options)?;
    for (p, curve) in options.flip_fractions.iter().zip(&result.curves) {
        write_curve(out, &format!("pseudo_update_p{}.csv", tag(*p)), curve)?;
        line(summary, &format!("saturation p_flip={p}"), format!("{:.4e}", curve.final_value()));
    }
    Ok(())
}

fn stability(config: &ExperimentConfig, seed: u64, out: &mut OutputDir, summary: &mut Summary) -> Result<()> {
    let mut options = config.stability.clone();
    options.seed = seed;
    options.model = config.hardware;
    options.model.seed = seed;
    let proto = experiment_prototype(config, options.n_visible, options.n_hidden, seed)?;
    let result = run_stability_experiment(|| Ok(proto.instance()), &options)?;
    write_curve(out, "stability_single_run.csv", &result.single_run)?;
    write_curve(out, "stability_run_average.csv", &result.run_average)?;
    line(summary, "drift_sigma", options.model.drift_sigma);
    line(summary, "run_average_final", format!("{:.4e}", result.run_average.final_value()));
    Ok(())
}

fn diag(config: &ExperimentConfig, out: &mut OutputDir, summary: &mut Summary) -> Result<()> {
    let spec = config.system.spec();
    let gs = exact_ground_state(&spec)?;
    out.write_with("psi0.csv", |b| gs.write_csv(b))?;
    let row = observable_row(config.system.field, &gs.probabilities(), &spec, &gs, config.training.epsilon)?;
    out.write_with("observables_exact.csv", |b| write_observables_csv(std::slice::from_ref(&row), b))?;
    line(summary, "system", format!("N={} J={} h={}", spec.n_spins, spec.coupling, spec.field));
    line(summary, "E0", format!("{:.12}", gs.energy));
    line(summary, "E0_per_spin", format!("{:.12}", gs.energy / spec.n_spins as f64));
    line(summary, "sigma_x", format!("{:.6}", row.sigma_x));
    Ok(())
}
