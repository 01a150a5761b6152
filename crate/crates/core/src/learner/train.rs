//! The variational loop: program, sample, estimate, update.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, lr_schedule, AdamState};
use super::backend::{SampleRequest, SamplingBackend, WeightDomain};
use super::gradient::estimate_gradient;
use crate::boltzmann::{dkl, RbmParams};
use crate::error::{ensure_finite, Error, Result};
use crate::quantum::{energy_error, exact_ground_state, fidelity, GroundStateSolution, TfimSpec, MAX_SPINS};
use crate::rng;
use crate::snn::network::MAX_WEIGHT;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub iterations: usize,
    /// Samples per iteration, summed over all runs.
    pub samples_per_iteration: usize,
    pub runs_per_iteration: usize,
    /// `η(1)`.
    pub learning_rate: f64,
    /// `γ_lr` in `η(t) = η(1) γ_lr^(t-1)`.
    pub lr_decay: f64,
    /// Regularizer inside local-energy ratios.
    pub epsilon: f64,
    /// Added to every bias at initialization, in hardware units.
    pub bias_init_offset: f64,
    /// Initial weights are uniform integers in `[-r, r]`.
    pub init_weight_range: i32,
    pub bias_clip: f64,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            iterations: 1500,
            samples_per_iteration: 200_000,
            runs_per_iteration: 3,
            learning_rate: 1.0,
            lr_decay: 0.999,
            epsilon: 1e-12,
            bias_init_offset: 0.0,
            init_weight_range: 5,
            bias_clip: 127.0,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_iteration == 0 || self.runs_per_iteration == 0 {
            return Err(Error::invalid("samples", "samples and runs per iteration must be positive"));
        }
        if self.runs_per_iteration > self.samples_per_iteration {
            return Err(Error::invalid("runs_per_iteration", "exceeds samples_per_iteration"));
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("lr_decay", self.lr_decay),
            ("epsilon", self.epsilon),
            ("bias_init_offset", self.bias_init_offset),
            ("bias_clip", self.bias_clip),
        ] {
            ensure_finite(name, v)?;
        }
        if self.learning_rate <= 0.0 || self.lr_decay <= 0.0 || self.lr_decay > 1.0 {
            return Err(Error::invalid("learning rate", "need η(1) > 0 and 0 < γ_lr ≤ 1"));
        }
        if self.epsilon < 0.0 || self.bias_clip <= 0.0 {
            return Err(Error::invalid("epsilon/bias_clip", "must be non-negative/positive"));
        }
        if !(0..=MAX_WEIGHT).contains(&self.init_weight_range) {
            return Err(Error::invalid("init_weight_range", format!("must lie in 0..={MAX_WEIGHT}")));
        }
        Ok(())
    }
}

/// One completed iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub energy: f64,
    pub delta_e: Option<f64>,
    pub infidelity: Option<f64>,
    pub dkl: Option<f64>,
    /// Fraction of integer weights that changed with this iteration's update.
    pub flip_fraction: f64,
    pub wall_time: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingTrace {
    pub rows: Vec<TraceRow>,
}

impl TrainingTrace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Median of `f` over the last `window` rows that have a value.
    pub fn tail_median(&self, window: usize, f: impl Fn(&TraceRow) -> Option<f64>) -> Option<f64> {
        let start = self.rows.len().saturating_sub(window);
        let mut values: Vec<f64> = self.rows[start..].iter().filter_map(f).collect();
        median(&mut values)
    }

    /// Wall time is left out so that reruns produce identical files.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "E", "dE", "infidelity", "dkl", "flip_fraction"])?;
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        for r in &self.rows {
            w.write_record([
                r.iteration.to_string(),
                r.energy.to_string(),
                opt(r.delta_e),
                opt(r.infidelity),
                opt(r.dkl),
                r.flip_fraction.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    })
}

/// Resumable training state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub iteration: usize,
    pub n_visible: usize,
    pub n_hidden: usize,
    /// Row-major `N × N_h`.
    pub weights: Vec<f64>,
    pub visible_bias: Vec<f64>,
    pub hidden_bias: Vec<f64>,
    pub adam: AdamState,
}

impl Checkpoint {
    pub fn params(&self) -> Result<RbmParams> {
        if self.weights.len() != self.n_visible * self.n_hidden {
            return Err(Error::Shape("checkpoint weights do not match its layer sizes".into()));
        }
        RbmParams::new(
            DMatrix::from_row_slice(self.n_visible, self.n_hidden, &self.weights),
            self.visible_bias.clone(),
            self.hidden_bias.clone(),
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, toml::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(toml::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Parameters flattened as weights (row-major), visible biases, hidden biases.
pub fn flatten(params: &RbmParams) -> Vec<f64> {
    let (n, nh) = (params.n_visible(), params.n_hidden());
    let mut out = Vec::with_capacity(n * nh + n + nh);
    for i in 0..n {
        for j in 0..nh {
            out.push(params.weights[(i, j)]);
        }
    }
    out.extend(&params.visible_bias);
    out.extend(&params.hidden_bias);
    out
}

fn unflatten(values: &[f64], n: usize, nh: usize) -> RbmParams {
    RbmParams {
        weights: DMatrix::from_row_slice(n, nh, &values[..n * nh]),
        visible_bias: values[n * nh..n * nh + n].to_vec(),
        hidden_bias: values[n * nh + n..].to_vec(),
    }
}

/// Rounds and clips weights to the integer range and biases to whole units.
pub fn quantize(params: &RbmParams, bias_clip: f64) -> RbmParams {
    let w_max = f64::from(MAX_WEIGHT);
    RbmParams {
        weights: params.weights.map(|w| w.clamp(-w_max, w_max).round()),
        visible_bias: params.visible_bias.iter().map(|b| b.clamp(-bias_clip, bias_clip).round()).collect(),
        hidden_bias: params.hidden_bias.iter().map(|b| b.clamp(-bias_clip, bias_clip).round()).collect(),
    }
}

/// Result of a training run; `failure` is set when it stopped early.
#[derive(Debug)]
pub struct TrainingOutcome {
    pub trace: TrainingTrace,
    /// Continuous master parameters in hardware units.
    pub params: RbmParams,
    /// Visible distribution sampled in the last iteration.
    pub last_distribution: Vec<f64>,
    pub checkpoint: Checkpoint,
    pub failure: Option<Error>,
}

/// Stateful trainer; [`train`] drives it to completion.
pub struct Trainer {
    spec: TfimSpec,
    config: TrainingConfig,
    master: RbmParams,
    adam: AdamState,
    iteration: usize,
    ground: Option<GroundStateSolution>,
    ground_probabilities: Option<Vec<f64>>,
    trace: TrainingTrace,
    last_distribution: Vec<f64>,
}

impl Trainer {
    /// Weights uniform in `[-r, r]`, biases at the activation midpoints plus the offset.
    pub fn new(spec: &TfimSpec, n_hidden: usize, config: &TrainingConfig) -> Result<Self> {
        spec.validate()?;
        config.validate()?;
        let n = spec.n_spins;
        let mut rng = rng::stream(config.seed, 0x696e6974);
        let r = config.init_weight_range;
        let weights = DMatrix::from_fn(n, n_hidden, |_, _| f64::from(rng.random_range(-r..=r)));
        let offset = config.bias_init_offset;
        let master = RbmParams::new(weights, vec![offset; n], vec![offset; n_hidden])?;
        let adam = AdamState::new(n * n_hidden + n + n_hidden);
        Self::assemble(spec, config, master, adam, 0)
    }

    pub fn from_checkpoint(spec: &TfimSpec, config: &TrainingConfig, checkpoint: &Checkpoint) -> Result<Self> {
        spec.validate()?;
        config.validate()?;
        if checkpoint.n_visible != spec.n_spins {
            return Err(Error::Shape("checkpoint does not match the spin chain".into()));
        }
        let master = checkpoint.params()?;
        if checkpoint.adam.len() != flatten(&master).len() {
            return Err(Error::Shape("checkpoint optimizer state does not match its parameters".into()));
        }
        Self::assemble(spec, config, master, checkpoint.adam.clone(), checkpoint.iteration)
    }

    fn assemble(
        spec: &TfimSpec,
        config: &TrainingConfig,
        master: RbmParams,
        adam: AdamState,
        iteration: usize,
    ) -> Result<Self> {
        let ground = if spec.n_spins <= MAX_SPINS {
            Some(exact_ground_state(spec)?)
        } else {
            None
        };
        Ok(Self {
            spec: *spec,
            config: *config,
            ground_probabilities: ground.as_ref().map(|g| g.probabilities()),
            ground,
            master,
            adam,
            iteration,
            trace: TrainingTrace::default(),
            last_distribution: Vec::new(),
        })
    }

    pub fn params(&self) -> &RbmParams {
        &self.master
    }

    /// Visible distribution estimated in the latest step.
    pub fn last_distribution(&self) -> &[f64] {
        &self.last_distribution
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn trace(&self) -> &TrainingTrace {
        &self.trace
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            iteration: self.iteration,
            n_visible: self.master.n_visible(),
            n_hidden: self.master.n_hidden(),
            weights: flatten(&self.master)[..self.master.n_visible() * self.master.n_hidden()].to_vec(),
            visible_bias: self.master.visible_bias.clone(),
            hidden_bias: self.master.hidden_bias.clone(),
            adam: self.adam.clone(),
        }
    }

    /// Parameters as written to `backend`.
    pub fn programmed(&self, backend: &dyn SamplingBackend) -> RbmParams {
        match backend.capability().weight_domain {
            WeightDomain::Integer { .. } => quantize(&self.master, self.config.bias_clip),
            WeightDomain::Continuous => self.master.clone(),
        }
    }

    /// Runs one iteration. A failing backend call is retried once with a fresh seed.
    pub fn step(&mut self, backend: &mut dyn SamplingBackend) -> Result<TraceRow> {
        let start = Instant::now();
        let t = self.iteration + 1;
        let programmed = self.programmed(backend);
        let mut request = SampleRequest {
            n_samples: self.config.samples_per_iteration,
            runs: self.config.runs_per_iteration,
            seed: rng::mix(&[self.config.seed, t as u64]),
        };
        let samples = match backend.sample(&programmed, &request) {
            Ok(s) => s,
            Err(e) => {
                log::warn!("{} backend failed at iteration {t} ({e}); retrying", backend.name());
                request.seed = rng::mix(&[request.seed, 0x7265747279]);
                backend.sample(&programmed, &request)?
            }
        };
        let grad = estimate_gradient(&samples, &self.spec, self.config.epsilon)?;

        let scale = backend.scale();
        let (n, nh) = (self.master.n_visible(), self.master.n_hidden());
        let mut g = grad.flatten();
        for (k, x) in g.iter_mut().enumerate() {
            *x *= if k < n * nh { scale.weight } else { scale.bias };
        }
        let lr = lr_schedule(t as u64, self.config.learning_rate, self.config.lr_decay);
        let delta = adam_step(&mut self.adam, &g, lr)?;

        let before = quantize(&self.master, self.config.bias_clip);
        let w_max = f64::from(MAX_WEIGHT);
        let clip = self.config.bias_clip;
        let values: Vec<f64> = flatten(&self.master)
            .iter()
            .zip(&delta)
            .enumerate()
            .map(|(k, (p, d))| {
                let limit = if k < n * nh { w_max } else { clip };
                (p + d).clamp(-limit, limit)
            })
            .collect();
        self.master = unflatten(&values, n, nh);
        let after = quantize(&self.master, self.config.bias_clip);
        let flipped = before.weights.iter().zip(after.weights.iter()).filter(|(a, b)| a != b).count();
        let flip_fraction = if n * nh > 0 {
            flipped as f64 / (n * nh) as f64
        } else {
            0.0
        };

        let (delta_e, infidelity, divergence) = match (&self.ground, &self.ground_probabilities) {
            (Some(gs), Some(gp)) => (
                Some(energy_error(grad.energy, gs.energy, n)),
                Some(1.0 - fidelity(&grad.distribution, gs)?),
                Some(dkl(&grad.distribution, gp)?),
            ),
            _ => (None, None, None),
        };
        self.iteration = t;
        self.last_distribution = grad.distribution;
        let row = TraceRow {
            iteration: t,
            energy: grad.energy,
            delta_e,
            infidelity,
            dkl: divergence,
            flip_fraction,
            wall_time: start.elapsed().as_secs_f64(),
        };
        self.trace.rows.push(row);
        Ok(row)
    }

    /// Runs until `config.iterations` have completed or an iteration fails.
    pub fn run(mut self, backend: &mut dyn SamplingBackend, mut on_row: impl FnMut(&TraceRow)) -> TrainingOutcome {
        let mut failure = None;
        if let Err(e) = backend.capability().check(self.master.n_visible(), self.master.n_hidden()) {
            failure = Some(e);
        }
        while failure.is_none() && self.iteration < self.config.iterations {
            match self.step(backend) {
                Ok(row) => on_row(&row),
                Err(e) => failure = Some(e),
            }
        }
        TrainingOutcome {
            checkpoint: self.checkpoint(),
            trace: self.trace,
            params: self.master,
            last_distribution: self.last_distribution,
            failure,
        }
    }
}

/// Trains an `N × n_hidden` machine for the ground state of `spec`.
pub fn train(
    spec: &TfimSpec,
    n_hidden: usize,
    backend: &mut dyn SamplingBackend,
    config: &TrainingConfig,
) -> Result<TrainingOutcome> {
    Ok(Trainer::new(spec, n_hidden, config)?.run(backend, |_| {}))
}
