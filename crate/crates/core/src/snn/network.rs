use std::io::Write;
use std::path::Path;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::neuron::NeuronParams;
use crate::error::{ensure_finite, Error, Result};
use crate::rng;

/// Largest logical weight magnitude (6-bit magnitude plus sign).
pub const MAX_WEIGHT: i32 = 63;

/// Number of freely connectable sampling neurons on the emulated chip.
pub const MAX_NEURONS: usize = 196;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    /// Sources are shared between neurons, which correlates their noise.
    SharedPool,
    /// Every assigned source is a private Poisson stream.
    Independent,
}

/// Poisson background pool.
///
/// Sources `0..n_excitatory_sources` are excitatory, the remaining ones inhibitory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoisePoolConfig {
    pub n_excitatory_sources: usize,
    pub n_inhibitory_sources: usize,
    pub sources_per_neuron: usize,
    /// Events per unit model time.
    pub rate_per_source: f64,
    /// Current jump per excitatory event.
    pub noise_weight_exc: f64,
    /// Current magnitude per inhibitory event (applied with negative sign).
    pub noise_weight_inh: f64,
    pub mode: NoiseMode,
}

impl Default for NoisePoolConfig {
    fn default() -> Self {
        Self {
            n_excitatory_sources: 32,
            n_inhibitory_sources: 32,
            sources_per_neuron: 10,
            rate_per_source: 4.0,
            noise_weight_exc: 1.0,
            noise_weight_inh: 1.0,
            mode: NoiseMode::Independent,
        }
    }
}

impl NoisePoolConfig {
    pub fn n_sources(&self) -> usize {
        self.n_excitatory_sources + self.n_inhibitory_sources
    }

    pub fn is_excitatory(&self, source: usize) -> bool {
        source < self.n_excitatory_sources
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("rate_per_source", self.rate_per_source)?;
        ensure_finite("noise_weight_exc", self.noise_weight_exc)?;
        ensure_finite("noise_weight_inh", self.noise_weight_inh)?;
        if self.rate_per_source < 0.0 {
            return Err(Error::invalid("rate_per_source", "must be non-negative"));
        }
        if self.noise_weight_exc < 0.0 || self.noise_weight_inh < 0.0 {
            return Err(Error::invalid("noise weights", "are magnitudes and must be non-negative"));
        }
        if self.sources_per_neuron > self.n_sources() {
            return Err(Error::invalid(
                "sources_per_neuron",
                format!(
                    "{} exceeds the pool of {} sources",
                    self.sources_per_neuron,
                    self.n_sources()
                ),
            ));
        }
        Ok(())
    }

    /// Balanced assignment: each neuron gets the first `⌈k/2⌉` excitatory and
    /// `⌊k/2⌋` inhibitory sources.
    pub fn balanced_assignment(&self, n_neurons: usize) -> Vec<Vec<usize>> {
        let k = self.sources_per_neuron;
        let n_exc = k.div_ceil(2).min(self.n_excitatory_sources);
        let n_inh = (k - n_exc).min(self.n_inhibitory_sources);
        let sources: Vec<usize> = (0..n_exc)
            .chain((0..n_inh).map(|s| self.n_excitatory_sources + s))
            .collect();
        vec![sources; n_neurons]
    }

    /// Each neuron draws `sources_per_neuron` distinct sources uniformly from the pool.
    pub fn random_assignment(&self, n_neurons: usize, seed: u64) -> Vec<Vec<usize>> {
        let mut rng = rng::stream(seed, 0x6e6f697365);
        (0..n_neurons)
            .map(|_| {
                let mut s = sample(&mut rng, self.n_sources(), self.sources_per_neuron).into_vec();
                s.sort_unstable();
                s
            })
            .collect()
    }
}

/// Physical description of one sampling network.
///
/// Neurons `0..n_visible` are visible, the rest hidden. `weights` is the full
/// symmetric integer matrix; only visible-hidden entries may be non-zero.
/// The effective leak potential of neuron `k` is
/// `neurons[k].leak_potential + biases[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub n_visible: usize,
    pub n_hidden: usize,
    pub weights: Vec<Vec<i32>>,
    pub biases: Vec<f64>,
    pub neurons: Vec<NeuronParams>,
    /// Synaptic current per integer weight step.
    pub weight_unit: f64,
    pub noise: NoisePoolConfig,
    pub noise_assignment: Vec<Vec<usize>>,
    pub rng_seed: u64,
    /// Real-valued deviations added to the integer weights (drift emulation).
    /// Empty means none; otherwise a symmetric matrix with the shape of `weights`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub weight_offsets: Vec<Vec<f64>>,
}

impl NetworkConfig {
    /// Unconnected network with default neurons and noise.
    pub fn new(n_visible: usize, n_hidden: usize, rng_seed: u64) -> Self {
        Self::with_neuron(n_visible, n_hidden, NeuronParams::default(), NoisePoolConfig::default(), rng_seed)
    }

    pub fn with_neuron(
        n_visible: usize,
        n_hidden: usize,
        neuron: NeuronParams,
        noise: NoisePoolConfig,
        rng_seed: u64,
    ) -> Self {
        let n = n_visible + n_hidden;
        let noise_assignment = match noise.mode {
            NoiseMode::Independent => noise.balanced_assignment(n),
            NoiseMode::SharedPool => noise.random_assignment(n, rng_seed),
        };
        Self {
            n_visible,
            n_hidden,
            weights: vec![vec![0; n]; n],
            biases: vec![0.0; n],
            neurons: vec![neuron; n],
            weight_unit: 0.15,
            noise,
            noise_assignment,
            rng_seed,
            weight_offsets: Vec::new(),
        }
    }

    pub fn n_neurons(&self) -> usize {
        self.n_visible + self.n_hidden
    }

    pub fn is_visible(&self, k: usize) -> bool {
        k < self.n_visible
    }

    /// Sets the symmetric coupling between visible `i` and hidden `j` (hidden index from 0).
    pub fn set_coupling(&mut self, visible: usize, hidden: usize, w: i32) {
        let h = self.n_visible + hidden;
        self.weights[visible][h] = w;
        self.weights[h][visible] = w;
    }

    pub fn coupling(&self, visible: usize, hidden: usize) -> i32 {
        self.weights[visible][self.n_visible + hidden]
    }

    /// Visible-hidden block as `N` rows of `N_h` integers.
    pub fn bipartite_block(&self) -> Vec<Vec<i32>> {
        (0..self.n_visible)
            .map(|i| (0..self.n_hidden).map(|j| self.coupling(i, j)).collect())
            .collect()
    }

    /// Integer weight plus any real-valued offset.
    pub fn effective_weight(&self, i: usize, j: usize) -> f64 {
        let offset = self.weight_offsets.get(i).map_or(0.0, |r| r[j]);
        f64::from(self.weights[i][j]) + offset
    }

    pub fn effective_leak(&self, k: usize) -> f64 {
        self.neurons[k].leak_potential + self.biases[k]
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_neurons();
        if n == 0 {
            return Err(Error::invalid("network", "needs at least one neuron"));
        }
        if n > MAX_NEURONS {
            return Err(Error::Capacity {
                what: "sampling neurons",
                value: n,
                limit: MAX_NEURONS,
            });
        }
        if self.weights.len() != n || self.weights.iter().any(|r| r.len() != n) {
            return Err(Error::Shape(format!("weight matrix must be {n}x{n}")));
        }
        if self.biases.len() != n || self.neurons.len() != n || self.noise_assignment.len() != n {
            return Err(Error::Shape(format!(
                "per-neuron vectors must have length {n} (biases {}, neurons {}, noise {})",
                self.biases.len(),
                self.neurons.len(),
                self.noise_assignment.len()
            )));
        }
        for (i, row) in self.weights.iter().enumerate() {
            for (j, &w) in row.iter().enumerate() {
                if w.abs() > MAX_WEIGHT {
                    return Err(Error::invalid(
                        format!("weights[{i}][{j}]"),
                        format!("|{w}| exceeds {MAX_WEIGHT}"),
                    ));
                }
                if w != self.weights[j][i] {
                    return Err(Error::invalid(format!("weights[{i}][{j}]"), "matrix must be symmetric"));
                }
                if w != 0 && self.is_visible(i) == self.is_visible(j) {
                    return Err(Error::invalid(
                        format!("weights[{i}][{j}]"),
                        "only visible-hidden couplings are allowed",
                    ));
                }
            }
        }
        if !self.weight_offsets.is_empty() {
            if self.weight_offsets.len() != n || self.weight_offsets.iter().any(|r| r.len() != n) {
                return Err(Error::Shape(format!("weight offsets must be empty or {n}x{n}")));
            }
            for i in 0..n {
                for j in 0..n {
                    let d = self.weight_offsets[i][j];
                    ensure_finite(&format!("weight_offsets[{i}][{j}]"), d)?;
                    if d != self.weight_offsets[j][i] || (d != 0.0 && self.is_visible(i) == self.is_visible(j)) {
                        return Err(Error::invalid(
                            format!("weight_offsets[{i}][{j}]"),
                            "offsets must be symmetric and visible-hidden only",
                        ));
                    }
                }
            }
        }
        for (k, b) in self.biases.iter().enumerate() {
            ensure_finite(&format!("biases[{k}]"), *b)?;
        }
        ensure_finite("weight_unit", self.weight_unit)?;
        for p in &self.neurons {
            p.validate()?;
        }
        self.noise.validate()?;
        for (k, sources) in self.noise_assignment.iter().enumerate() {
            let mut seen = sources.clone();
            seen.sort_unstable();
            seen.dedup();
            if seen.len() != sources.len() || sources.iter().any(|&s| s >= self.noise.n_sources()) {
                return Err(Error::invalid(
                    format!("noise_assignment[{k}]"),
                    "sources must be distinct indices into the pool",
                ));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_toml()?.as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}
