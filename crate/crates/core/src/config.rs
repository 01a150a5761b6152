//! Experiment configuration shared by the command-line front end.
//!
//! One TOML file describes the system, the backend and the settings of every
//! experiment kind; unspecified fields take the defaults below. Seeds are set
//! once at the top level and handed to every component.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::boltzmann::MAX_EXACT_UNITS;
use crate::error::Error;
use crate::hardware::{HardwareModel, PseudoUpdateOptions, ResolutionOptions, StabilityOptions, GRID_STEPS};
use crate::learner::TrainingConfig;
use crate::quantum::{TfimSpec, MAX_SPINS};
use crate::snn::calibrate::CalibrationOptions;
use crate::snn::network::MAX_NEURONS;
use crate::snn::{NeuronParams, NoisePoolConfig};

/// `(h/J, N_sample, N_h)` used for the `N = 8` phase diagram.
pub const PHASE_SWEEP_SETTINGS: [(f64, usize, usize); 7] = [
    (0.1, 200_000, 50),
    (0.5, 200_000, 30),
    (0.9, 400_000, 40),
    (1.0, 200_000, 40),
    (1.25, 200_000, 30),
    (5.0, 200_000, 20),
    (10.0, 200_000, 30),
];

/// Hidden units used when neither the system section nor the phase table sets them.
pub const DEFAULT_HIDDEN: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Train,
    Sample,
    Calibrate,
    PhaseSweep,
    SizeSweep,
    Resolution,
    PseudoUpdate,
    Stability,
    Diag,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 9] = [
        Self::Train,
        Self::Sample,
        Self::Calibrate,
        Self::PhaseSweep,
        Self::SizeSweep,
        Self::Resolution,
        Self::PseudoUpdate,
        Self::Stability,
        Self::Diag,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Sample => "sample",
            Self::Calibrate => "calibrate",
            Self::PhaseSweep => "phase-sweep",
            Self::SizeSweep => "size-sweep",
            Self::Resolution => "resolution",
            Self::PseudoUpdate => "pseudo-update",
            Self::Stability => "stability",
            Self::Diag => "diag",
        }
    }

    pub fn needs_seed(self) -> bool {
        matches!(self, Self::Train | Self::Sample)
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown experiment kind `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Snn,
    #[default]
    Gibbs,
    Exact,
}

impl BackendKind {
    pub fn max_units(self) -> usize {
        match self {
            Self::Snn => MAX_NEURONS,
            Self::Gibbs => usize::MAX,
            Self::Exact => MAX_EXACT_UNITS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub n_spins: usize,
    pub coupling: f64,
    /// Transverse field in units of the coupling, `h/J`.
    pub field: f64,
    /// Overrides the phase table and [`DEFAULT_HIDDEN`].
    pub n_hidden: Option<usize>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            n_spins: 8,
            coupling: 1.0,
            field: 1.0,
            n_hidden: None,
        }
    }
}

impl SystemConfig {
    pub fn spec(&self) -> TfimSpec {
        self.spec_at(self.n_spins, self.field)
    }

    /// Chain of `n_spins` sites at `h/J = h_over_j` with this coupling.
    pub fn spec_at(&self, n_spins: usize, h_over_j: f64) -> TfimSpec {
        TfimSpec {
            n_spins,
            coupling: self.coupling,
            field: h_over_j * self.coupling,
        }
    }
}

/// Neuron, noise and readout settings of the spiking backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkOverrides {
    pub neuron: NeuronParams,
    pub noise: NoisePoolConfig,
    pub weight_unit: f64,
    /// Defaults to the refractory time.
    pub readout_interval: Option<f64>,
    /// Defaults to 50 refractory times.
    pub burn_in: Option<f64>,
    /// Abstract bias per hardware bias unit.
    pub bias_scale: f64,
    /// Previously written calibration to reuse instead of measuring.
    pub calibration_file: Option<PathBuf>,
}

impl Default for NetworkOverrides {
    fn default() -> Self {
        Self {
            neuron: NeuronParams::default(),
            noise: NoisePoolConfig::default(),
            weight_unit: 0.15,
            readout_interval: None,
            burn_in: None,
            bias_scale: crate::learner::DEFAULT_SCALE,
            calibration_file: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GibbsSettings {
    pub burn_in: usize,
    pub warm_burn_in: usize,
    pub thinning: usize,
    pub integer_weights: bool,
    /// Abstract value of one weight unit.
    pub weight_scale: f64,
    /// Abstract value of one bias unit.
    pub bias_scale: f64,
}

impl Default for GibbsSettings {
    fn default() -> Self {
        Self {
            burn_in: 1000,
            warm_burn_in: 20,
            thinning: 1,
            integer_weights: false,
            weight_scale: crate::learner::DEFAULT_SCALE,
            bias_scale: crate::learner::DEFAULT_SCALE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSettings {
    pub n_samples: usize,
    pub runs: usize,
    /// Parameters to sample; random initial parameters when absent.
    pub checkpoint: Option<PathBuf>,
}

impl Default for SampleSettings {
    fn default() -> Self {
        Self {
            n_samples: 100_000,
            runs: 1,
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseSweepSettings {
    pub fields: Vec<f64>,
    /// Train at every field; otherwise only exact observables are written.
    pub train: bool,
}

impl Default for PhaseSweepSettings {
    fn default() -> Self {
        Self {
            fields: PHASE_SWEEP_SETTINGS.iter().map(|r| r.0).collect(),
            train: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SizeSweepSettings {
    pub sizes: Vec<usize>,
}

impl Default for SizeSweepSettings {
    fn default() -> Self {
        Self {
            sizes: (3..=10).collect(),
        }
    }
}

/// `(N_h, N_sample)` for the system-size sweep.
pub fn size_sweep_settings(n_spins: usize) -> (usize, usize) {
    if n_spins <= 8 {
        (40, 200_000)
    } else {
        (50, 400_000)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Option<ExperimentKind>,
    pub seed: Option<u64>,
    pub backend: BackendKind,
    pub out: Option<PathBuf>,
    pub system: SystemConfig,
    pub training: TrainingConfig,
    /// Drift, grid and pseudo-update settings; the stability study uses this model.
    pub hardware: HardwareModel,
    pub network: NetworkOverrides,
    pub calibration: CalibrationOptions,
    pub gibbs: GibbsSettings,
    pub sample: SampleSettings,
    pub phase_sweep: PhaseSweepSettings,
    pub size_sweep: SizeSweepSettings,
    pub resolution: ResolutionOptions,
    pub pseudo_update: PseudoUpdateOptions,
    pub stability: StabilityOptions,
}

/// One schema or cross-field problem, located by its dotted field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl Violation {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }

    fn from_error(section: &str, err: Error) -> Self {
        match err {
            Error::InvalidParameter { name, reason } => Self::new(format!("{section}.{name}"), reason),
            Error::Capacity { what, value, limit } => {
                Self::new(section, format!("{what} = {value} exceeds the limit {limit}"))
            }
            other => Self::new(section, other.to_string()),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, Violation> {
        toml::from_str(text).map_err(|e| Violation::new("<config>", e.message().to_string()).with_span(text, e.span()))
    }

    pub fn load(path: &Path) -> Result<Self, Violation> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Violation::new("<config>", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration always serializes")
    }

    /// Hidden units for a chain in field `field`. Without an explicit value
    /// the exact backend gets at most `2 N` so that enumeration stays cheap.
    pub fn n_hidden_for(&self, field: f64) -> usize {
        self.system.n_hidden.unwrap_or_else(|| {
            let nh = phase_row(field).map_or(DEFAULT_HIDDEN, |r| r.2);
            match self.backend {
                BackendKind::Exact => nh.min(2 * self.system.n_spins),
                _ => nh,
            }
        })
    }

    /// Samples per iteration at `field`: the phase table value unless the
    /// training section changed the default.
    pub fn samples_for(&self, field: f64) -> usize {
        let configured = self.training.samples_per_iteration;
        if configured != TrainingConfig::default().samples_per_iteration {
            return configured;
        }
        phase_row(field).map_or(configured, |r| r.1)
    }

    /// Every violation for running `kind`; empty means valid.
    pub fn validate(&self, kind: ExperimentKind) -> Vec<Violation> {
        let mut v = Vec::new();
        if let Some(k) = self.kind {
            if k != kind {
                v.push(Violation::new("kind", format!("config is for `{k}` but `{kind}` was requested")));
            }
        }
        if kind.needs_seed() && self.seed.is_none() {
            v.push(Violation::new("seed", format!("`{kind}` needs a seed (config or --seed)")));
        }

        let s = &self.system;
        if !(3..=MAX_SPINS).contains(&s.n_spins) {
            v.push(Violation::new("system.n_spins", format!("must lie in 3..={MAX_SPINS}")));
        }
        if !(s.coupling.is_finite() && s.coupling > 0.0) {
            v.push(Violation::new("system.coupling", "J must be positive (ferromagnetic, stoquastic)"));
        }
        if !(s.field.is_finite() && s.field >= 0.0) {
            v.push(Violation::new("system.field", "h must be finite and non-negative"));
        }
        if s.n_hidden == Some(0) {
            v.push(Violation::new("system.n_hidden", "must be positive"));
        }

        let uses_model = matches!(
            kind,
            ExperimentKind::Train | ExperimentKind::Sample | ExperimentKind::PhaseSweep | ExperimentKind::SizeSweep
        );
        if uses_model {
            let mut systems: Vec<(String, usize, usize)> = Vec::new();
            match kind {
                ExperimentKind::PhaseSweep => {
                    for (i, &h) in self.phase_sweep.fields.iter().enumerate() {
                        if !(h.is_finite() && h >= 0.0) {
                            v.push(Violation::new(format!("phase_sweep.fields[{i}]"), "must be finite and non-negative"));
                        }
                        if self.phase_sweep.train {
                            systems.push((format!("phase_sweep.fields[{i}]"), s.n_spins, self.n_hidden_for(h)));
                        }
                    }
                    if self.phase_sweep.fields.is_empty() {
                        v.push(Violation::new("phase_sweep.fields", "needs at least one field"));
                    }
                }
                ExperimentKind::SizeSweep => {
                    for (i, &n) in self.size_sweep.sizes.iter().enumerate() {
                        if !(3..=MAX_SPINS).contains(&n) {
                            v.push(Violation::new(format!("size_sweep.sizes[{i}]"), format!("must lie in 3..={MAX_SPINS}")));
                        }
                        let nh = s.n_hidden.unwrap_or(size_sweep_settings(n).0);
                        systems.push((format!("size_sweep.sizes[{i}]"), n, nh));
                    }
                    if self.size_sweep.sizes.is_empty() {
                        v.push(Violation::new("size_sweep.sizes", "needs at least one size"));
                    }
                }
                _ => systems.push(("system".into(), s.n_spins, self.n_hidden_for(s.field))),
            }
            for (path, n, nh) in systems {
                let limit = self.backend.max_units();
                if n + nh > limit {
                    v.push(Violation::new(
                        path,
                        format!(
                            "N + N_h = {} exceeds the {} backend limit of {limit} units",
                            n + nh,
                            backend_name(&self.backend)
                        ),
                    ));
                }
            }
            if let Err(e) = self.training.validate() {
                v.push(Violation::from_error("training", e));
            }
            if kind == ExperimentKind::Sample && (self.sample.n_samples == 0 || self.sample.runs == 0) {
                v.push(Violation::new("sample", "n_samples and runs must be positive"));
            }
        }

        let uses_snn = self.backend == BackendKind::Snn || kind == ExperimentKind::Calibrate;
        if uses_snn {
            let net = &self.network;
            if let Err(e) = net.neuron.validate() {
                v.push(Violation::from_error("network.neuron", e));
            }
            if let Err(e) = net.noise.validate() {
                v.push(Violation::from_error("network.noise", e));
            }
            if !(net.weight_unit.is_finite() && net.weight_unit > 0.0) {
                v.push(Violation::new("network.weight_unit", "must be positive"));
            }
            if !(net.bias_scale.is_finite() && net.bias_scale > 0.0) {
                v.push(Violation::new("network.bias_scale", "must be positive"));
            }
            for (name, x) in [("readout_interval", net.readout_interval), ("burn_in", net.burn_in)] {
                if let Some(x) = x {
                    if !(x.is_finite() && x >= 0.0) || (name == "readout_interval" && x == 0.0) {
                        v.push(Violation::new(format!("network.{name}"), "must be finite and positive"));
                    }
                }
            }
        }
        if self.backend == BackendKind::Gibbs {
            let g = &self.gibbs;
            if g.thinning == 0 {
                v.push(Violation::new("gibbs.thinning", "must be positive"));
            }
            for (name, x) in [("weight_scale", g.weight_scale), ("bias_scale", g.bias_scale)] {
                if !(x.is_finite() && x > 0.0) {
                    v.push(Violation::new(format!("gibbs.{name}"), "must be positive"));
                }
            }
        }

        match kind {
            ExperimentKind::Resolution => {
                let r = &self.resolution;
                for (i, dw) in r.steps.iter().enumerate() {
                    if !GRID_STEPS.contains(dw) {
                        v.push(Violation::new(format!("resolution.steps[{i}]"), format!("must be one of {GRID_STEPS:?}")));
                    }
                }
                self.check_experiment(&mut v, "resolution", r.n_visible, r.n_hidden, r.repetitions, r.duration, r.weight_range);
            }
            ExperimentKind::PseudoUpdate => {
                let p = &self.pseudo_update;
                for (i, f) in p.flip_fractions.iter().enumerate() {
                    if !(0.0..=1.0).contains(f) {
                        v.push(Violation::new(format!("pseudo_update.flip_fractions[{i}]"), "must lie in [0, 1]"));
                    }
                }
                self.check_experiment(&mut v, "pseudo_update", p.n_visible, p.n_hidden, p.repetitions, p.duration, p.weight_range);
            }
            ExperimentKind::Stability => {
                let st = &self.stability;
                if st.repeats < 2 {
                    v.push(Violation::new("stability.repeats", "needs at least 2 runs"));
                }
                self.check_experiment(&mut v, "stability", st.n_visible, st.n_hidden, st.repeats, st.duration, st.weight_range);
            }
            _ => {}
        }
        if let Err(e) = self.hardware.validate() {
            v.push(Violation::from_error("hardware", e));
        }
        if kind == ExperimentKind::Calibrate || self.backend == BackendKind::Snn {
            let c = &self.calibration;
            if c.sweep_points < 8 {
                v.push(Violation::new("calibration.sweep_points", "needs at least 8 points"));
            }
            if !(c.sweep_duration > 0.0 && c.reference_duration > 0.0 && c.sweep_half_width > 0.0) {
                v.push(Violation::new("calibration", "durations and sweep width must be positive"));
            }
        }
        v
    }

    #[allow(clippy::too_many_arguments)]
    fn check_experiment(
        &self,
        v: &mut Vec<Violation>,
        section: &str,
        n: usize,
        nh: usize,
        repetitions: usize,
        duration: f64,
        weight_range: i32,
    ) {
        if self.backend == BackendKind::Exact {
            v.push(Violation::new("backend", "experiments need a sampling backend (snn or gibbs)"));
        }
        if n == 0 || nh == 0 || n > crate::boltzmann::MAX_EXACT_VISIBLE {
            v.push(Violation::new(format!("{section}.n_visible"), "layer sizes must be positive and N ≤ 20"));
        }
        if n + nh > self.backend.max_units() {
            v.push(Violation::new(
                section,
                format!("N + N_h = {} exceeds the backend limit of {} units", n + nh, self.backend.max_units()),
            ));
        }
        if repetitions == 0 {
            v.push(Violation::new(format!("{section}.repetitions"), "must be positive"));
        }
        if !(duration.is_finite() && duration > 0.0) {
            v.push(Violation::new(format!("{section}.duration"), "must be positive"));
        }
        if !(0..=crate::snn::MAX_WEIGHT).contains(&weight_range) {
            v.push(Violation::new(format!("{section}.weight_range"), "must lie in 0..=63"));
        }
    }
}

fn phase_row(field: f64) -> Option<(f64, usize, usize)> {
    PHASE_SWEEP_SETTINGS.iter().copied().find(|r| (r.0 - field).abs() < 1e-12)
}

fn backend_name(kind: &BackendKind) -> &'static str {
    match kind {
        BackendKind::Snn => "snn",
        BackendKind::Gibbs => "gibbs",
        BackendKind::Exact => "exact",
    }
}

impl Violation {
    fn with_span(mut self, text: &str, span: Option<std::ops::Range<usize>>) -> Self {
        if let Some(span) = span {
            let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
            self.path = format!("<config>:{line}");
        }
        self
    }
}
