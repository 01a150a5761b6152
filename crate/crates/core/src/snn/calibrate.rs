//! Physical-to-abstract parameter map.
//!
//! Each neuron's activation `p(z = 1 | V_l)` is measured on an isolated copy
//! and fitted with a logistic `σ((V_l - u₀)/α)`. Abstract biases follow as
//! `b = (V_l - u₀)/α`. The weight factor `γ` of a neuron is the log-odds shift
//! of its state when a presynaptic reference neuron is active, per integer
//! weight unit.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::decode::decode_into;
use super::network::{NetworkConfig, NoiseMode, NoisePoolConfig, MAX_WEIGHT};
use super::neuron::NeuronParams;
use super::sim::{simulate_compiled, CompiledNetwork};
use crate::boltzmann::{sigmoid, RbmParams};
use crate::error::{Error, Result};
use crate::lsq::{levenberg_marquardt, LmOptions};
use crate::par::{self, Execution};
use crate::rng;
use crate::states::StateSamples;

/// Measured activation curve of one neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationCurve {
    /// `(V_l, p(z = 1))`, sorted by `V_l`.
    pub points: Vec<(f64, f64)>,
    /// Readouts per point.
    pub samples_per_point: usize,
    /// Whether the sweep reaches both saturation regions around the midpoint.
    pub brackets_inflection: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivationFit {
    pub u0: f64,
    pub alpha: f64,
    pub residual: f64,
}

impl ActivationFit {
    pub fn probability(&self, v_l: f64) -> f64 {
        sigmoid((v_l - self.u0) / self.alpha)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationOptions {
    pub sweep_points: usize,
    /// Sweep covers `threshold ± sweep_half_width`.
    pub sweep_half_width: f64,
    pub sweep_duration: f64,
    pub reference_weight: i32,
    pub reference_duration: f64,
    #[serde(skip)]
    pub seed: u64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            sweep_points: 25,
            sweep_half_width: 12.0,
            sweep_duration: 2.0e4,
            reference_weight: 16,
            reference_duration: 1.0e5,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

/// Per-neuron activation fits and weight factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationMap {
    pub fits: Vec<ActivationFit>,
    /// Abstract log-odds shift per integer weight unit, per postsynaptic neuron.
    pub weight_factors: Vec<f64>,
    /// Abstract bias added per unit of incoming weight while the presynaptic neuron is off.
    pub input_offsets: Vec<f64>,
}

impl CalibrationMap {
    pub fn n_neurons(&self) -> usize {
        self.fits.len()
    }

    pub fn bias_to_abstract(&self, k: usize, leak: f64) -> f64 {
        let f = &self.fits[k];
        (leak - f.u0) / f.alpha
    }

    pub fn bias_to_leak(&self, k: usize, bias: f64) -> f64 {
        let f = &self.fits[k];
        f.u0 + f.alpha * bias
    }

    /// Abstract weight per integer unit for the pair `(i, j)`.
    pub fn pair_factor(&self, i: usize, j: usize) -> f64 {
        0.5 * (self.weight_factors[i] + self.weight_factors[j])
    }

    pub fn weight_to_abstract(&self, i: usize, j: usize, w: i32) -> f64 {
        f64::from(w) * self.pair_factor(i, j)
    }

    /// Continuous integer-unit weight realizing abstract `weight`.
    pub fn weight_to_physical(&self, i: usize, j: usize, weight: f64) -> f64 {
        weight / self.pair_factor(i, j)
    }

    /// Mean weight factor over all neurons.
    pub fn mean_weight_factor(&self) -> f64 {
        self.weight_factors.iter().sum::<f64>() / self.weight_factors.len() as f64
    }

    /// Abstract machine realized by `config` under this map.
    pub fn abstract_params(&self, config: &NetworkConfig) -> Result<RbmParams> {
        self.check_size(config)?;
        let (n, nh) = (config.n_visible, config.n_hidden);
        let w = DMatrix::from_fn(n, nh, |i, j| config.effective_weight(i, n + j) * self.pair_factor(i, n + j));
        let bias = |k: usize| {
            let incoming: f64 = (0..n + nh).map(|r| config.effective_weight(k, r)).sum();
            self.bias_to_abstract(k, config.effective_leak(k)) + self.input_offsets[k] * incoming
        };
        RbmParams::new(w, (0..n).map(bias).collect(), (n..n + nh).map(bias).collect())
    }

    /// Writes `params` into `config`: weights rounded to integers, then leak
    /// offsets that realize the biases given those integer weights.
    ///
    /// Fails when a weight would exceed the integer range.
    pub fn configure(&self, config: &mut NetworkConfig, params: &RbmParams) -> Result<()> {
        self.check_size(config)?;
        let (n, nh) = (config.n_visible, config.n_hidden);
        if params.n_visible() != n || params.n_hidden() != nh {
            return Err(Error::Shape(format!(
                "machine is {}x{}, network is {n}x{nh}",
                params.n_visible(),
                params.n_hidden()
            )));
        }
        config.weight_offsets.clear();
        for i in 0..n {
            for j in 0..nh {
                let w = self.weight_to_physical(i, n + j, params.weights[(i, j)]).round();
                if w.abs() > f64::from(MAX_WEIGHT) {
                    return Err(Error::Capacity {
                        what: "integer weight",
                        value: w.abs() as usize,
                        limit: MAX_WEIGHT as usize,
                    });
                }
                config.set_coupling(i, j, w as i32);
            }
        }
        for k in 0..n + nh {
            let b = if k < n {
                params.visible_bias[k]
            } else {
                params.hidden_bias[k - n]
            };
            let incoming: i32 = config.weights[k].iter().sum();
            let b_leak = b - self.input_offsets[k] * f64::from(incoming);
            config.biases[k] = self.bias_to_leak(k, b_leak) - config.neurons[k].leak_potential;
        }
        Ok(())
    }

    fn check_size(&self, config: &NetworkConfig) -> Result<()> {
        if config.n_neurons() != self.n_neurons() {
            return Err(Error::Shape(format!(
                "calibration covers {} neurons, network has {}",
                self.n_neurons(),
                config.n_neurons()
            )));
        }
        Ok(())
    }
}

/// Single-neuron network carrying `params` and the noise of `noise`.
fn isolated(params: &NeuronParams, noise: &NoisePoolConfig, sources: &[usize], seed: u64) -> NetworkConfig {
    let noise = NoisePoolConfig {
        mode: NoiseMode::Independent,
        ..*noise
    };
    let mut net = NetworkConfig::with_neuron(1, 0, *params, noise, seed);
    net.noise_assignment = vec![sources.to_vec()];
    net
}

fn occupancy(net: &CompiledNetwork, tau_ref: &[f64], duration: f64, seed: u64) -> Result<StateSamples> {
    let record = simulate_compiled(net, duration, seed)?;
    let mut out = StateSamples::new(tau_ref.len(), 0);
    decode_into(&record, tau_ref, tau_ref[0], 0.0, &mut out)?;
    Ok(out)
}

/// Measures `p(z = 1)` of an isolated neuron at each leak potential.
///
/// Readouts are spaced by `τ_ref`. Requires at least 8 sweep points.
pub fn measure_activation(
    params: &NeuronParams,
    noise: &NoisePoolConfig,
    leak_sweep: &[f64],
    duration: f64,
    seed: u64,
) -> Result<ActivationCurve> {
    let sources = noise.balanced_assignment(1).remove(0);
    measure_with_sources(params, noise, &sources, leak_sweep, duration, seed, Execution::default())
}

fn measure_with_sources(
    params: &NeuronParams,
    noise: &NoisePoolConfig,
    sources: &[usize],
    leak_sweep: &[f64],
    duration: f64,
    seed: u64,
    exec: Execution,
) -> Result<ActivationCurve> {
    if leak_sweep.len() < 8 {
        return Err(Error::invalid("leak_sweep", "needs at least 8 points"));
    }
    if leak_sweep.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("leak_sweep", "must be finite"));
    }
    if !(duration.is_finite() && duration > params.refractory_time) {
        return Err(Error::invalid("duration", "must exceed one refractory period"));
    }
    params.validate()?;
    let mut sweep = leak_sweep.to_vec();
    sweep.sort_by(f64::total_cmp);
    let tau_ref = [params.refractory_time];
    let points = par::try_map_indexed(exec, sweep.len(), |idx| {
        let p = NeuronParams {
            leak_potential: sweep[idx],
            ..*params
        };
        let net = CompiledNetwork::compile(&isolated(&p, noise, sources, seed))?;
        let states = occupancy(&net, &tau_ref, duration, rng::mix(&[seed, idx as u64]))?;
        Ok::<_, Error>((sweep[idx], states.unit_means()[0]))
    })?;
    let samples_per_point = (duration / params.refractory_time).floor() as usize;
    let lowest = points.first().map_or(1.0, |p| p.1);
    let highest = points.last().map_or(0.0, |p| p.1);
    Ok(ActivationCurve {
        brackets_inflection: lowest < 0.1 && highest > 0.9,
        points,
        samples_per_point,
    })
}

/// Least-squares logistic fit `p = 1/(1 + exp(-(V_l - u₀)/α))`.
pub fn fit_logistic(curve: &[(f64, f64)]) -> Result<ActivationFit> {
    if curve.len() < 3 {
        return Err(Error::invalid("curve", "needs at least 3 points"));
    }
    let xs: Vec<f64> = curve.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = curve.iter().map(|p| p.1).collect();
    if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
        return Err(Error::invalid("curve", "must be finite"));
    }
    let (u0, alpha) = initial_logistic(&xs, &ys);
    let fit = levenberg_marquardt(&xs, &ys, &[u0, alpha], &LmOptions::default(), |q, x| {
        let z = (x - q[0]) / q[1];
        let p = sigmoid(z);
        let dp = p * (1.0 - p);
        (p, vec![-dp / q[1], -dp * z / q[1]])
    })?;
    let (u0, alpha) = (fit.params[0], fit.params[1]);
    if !(alpha.is_finite() && alpha > 0.0 && u0.is_finite()) {
        return Err(Error::invalid("activation", format!("degenerate logistic fit α = {alpha}")));
    }
    Ok(ActivationFit {
        u0,
        alpha,
        residual: fit.residual_norm(),
    })
}

/// Midpoint by interpolating the 0.5 crossing, slope from the 0.25..0.75 span.
fn initial_logistic(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let crossing = |level: f64| {
        order.windows(2).find_map(|w| {
            let (a, b) = (w[0], w[1]);
            ((ys[a] - level) * (ys[b] - level) <= 0.0 && ys[a] != ys[b])
                .then(|| xs[a] + (level - ys[a]) * (xs[b] - xs[a]) / (ys[b] - ys[a]))
        })
    };
    let span = xs[order[order.len() - 1]] - xs[order[0]];
    let u0 = crossing(0.5).unwrap_or(xs[order[order.len() / 2]]);
    let alpha = match (crossing(0.25), crossing(0.75)) {
        // σ⁻¹(0.75) - σ⁻¹(0.25) = 2 ln 3
        (Some(lo), Some(hi)) if hi > lo => (hi - lo) / (2.0 * 3f64.ln()),
        _ => span / 10.0,
    };
    (u0, alpha.max(1e-3 * span))
}

/// Calibrates every neuron of `config`.
///
/// Neurons sharing parameters and noise composition share one measurement.
pub fn calibrate(config: &NetworkConfig, options: &CalibrationOptions) -> Result<CalibrationMap> {
    config.validate()?;
    if options.sweep_points < 8 {
        return Err(Error::invalid("sweep_points", "needs at least 8 points"));
    }
    if options.reference_weight == 0 || options.reference_weight.abs() > MAX_WEIGHT {
        return Err(Error::invalid("reference_weight", "must be a non-zero integer weight"));
    }

    let n = config.n_neurons();
    let key = |k: usize| {
        let p = &config.neurons[k];
        let n_exc = config.noise_assignment[k]
            .iter()
            .filter(|&&s| config.noise.is_excitatory(s))
            .count();
        let n_inh = config.noise_assignment[k].len() - n_exc;
        (
            [
                p.membrane_capacitance,
                p.leak_conductance,
                p.threshold,
                p.reset,
                p.refractory_time,
                p.synaptic_time,
            ]
            .map(f64::to_bits),
            n_exc,
            n_inh,
        )
    };
    let mut groups: HashMap<_, usize> = HashMap::new();
    let mut representatives = Vec::new();
    let group_of: Vec<usize> = (0..n)
        .map(|k| {
            *groups.entry(key(k)).or_insert_with(|| {
                representatives.push(k);
                representatives.len() - 1
            })
        })
        .collect();

    let results = par::try_map_indexed(options.execution, representatives.len(), |g| {
        calibrate_neuron(config, representatives[g], options, rng::mix(&[options.seed, g as u64]))
    })?;
    Ok(CalibrationMap {
        fits: group_of.iter().map(|&g| results[g].0).collect(),
        weight_factors: group_of.iter().map(|&g| results[g].1).collect(),
        input_offsets: group_of.iter().map(|&g| results[g].2).collect(),
    })
}

fn calibrate_neuron(
    config: &NetworkConfig,
    k: usize,
    options: &CalibrationOptions,
    seed: u64,
) -> Result<(ActivationFit, f64, f64)> {
    let params = config.neurons[k];
    let sources = &config.noise_assignment[k];
    let m = options.sweep_points;
    let sweep: Vec<f64> = (0..m)
        .map(|i| {
            params.threshold - options.sweep_half_width
                + 2.0 * options.sweep_half_width * i as f64 / (m - 1) as f64
        })
        .collect();
    let curve = measure_with_sources(
        &params,
        &config.noise,
        sources,
        &sweep,
        options.sweep_duration,
        seed,
        Execution::Sequential,
    )?;
    if !curve.brackets_inflection {
        log::warn!("activation sweep of neuron {k} does not reach both saturation regions");
    }
    let fit = fit_logistic(&curve.points).map_err(|e| Error::Calibration {
        neuron: k,
        reason: e.to_string(),
    })?;
    if fit.alpha < 1e-6 * options.sweep_half_width {
        return Err(Error::Calibration {
            neuron: k,
            reason: format!("degenerate activation slope α = {}", fit.alpha),
        });
    }

    // Reference neuron 0 and neuron 1 share a symmetric synapse; both sit at their midpoints.
    // Runs with +w and -w separate the coupling from the residual input left
    // after the reference neuron's refractory period.
    let w_ref = options.reference_weight;
    let mut logits = [[0.0; 2]; 2];
    for (run, sign) in [1, -1].into_iter().enumerate() {
        logits[run] = conditional_logits(config, &params, sources, fit.u0, sign * w_ref, options, seed)?;
    }
    let w = f64::from(w_ref);
    let gamma = ((logits[0][1] - logits[0][0]) - (logits[1][1] - logits[1][0])) / (2.0 * w);
    let beta = (logits[0][0] - logits[1][0]) / (2.0 * w);
    if !(gamma.is_finite() && gamma > 0.0 && beta.is_finite()) {
        return Err(Error::Calibration {
            neuron: k,
            reason: format!("reference synapse produced no positive coupling (γ = {gamma})"),
        });
    }
    Ok((fit, gamma, beta))
}

/// `[logit p(z_1 | z_0 = 0), logit p(z_1 | z_0 = 1)]` for a driven pair.
fn conditional_logits(
    config: &NetworkConfig,
    params: &NeuronParams,
    sources: &[usize],
    u0: f64,
    weight: i32,
    options: &CalibrationOptions,
    seed: u64,
) -> Result<[f64; 2]> {
    // Private noise keeps the pair uncorrelated apart from the synapse.
    let noise = NoisePoolConfig {
        mode: NoiseMode::Independent,
        ..config.noise
    };
    let mut pair = NetworkConfig::with_neuron(1, 1, *params, noise, seed);
    pair.weight_unit = config.weight_unit;
    pair.noise_assignment = vec![sources.to_vec(), sources.to_vec()];
    pair.biases = vec![u0 - params.leak_potential; 2];
    pair.set_coupling(0, 0, weight);
    let net = CompiledNetwork::compile(&pair)?;
    let tau_ref = [params.refractory_time; 2];
    let run_seed = rng::mix(&[seed, 0x726566, weight as u64]);
    let states = occupancy(&net, &tau_ref, options.reference_duration, run_seed)?;
    let mut counts = [[0.5f64; 2]; 2];
    for r in 0..states.len() {
        let z = states.row(r);
        counts[usize::from(z[0])][usize::from(z[1])] += 1.0;
    }
    Ok(counts.map(|c| (c[1] / c[0]).ln()))
}
