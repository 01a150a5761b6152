//! Sampling backends: anything that turns parameters into joint samples.
//!
//! Parameters handed to a backend are in hardware units (integer weight
//! steps, LSB). Each backend reports the abstract value of one unit through
//! [`SamplingBackend::scale`].

use serde::{Deserialize, Serialize};

use crate::boltzmann::{bits, exact_joint, split_evenly, GibbsChain, RbmParams, MAX_EXACT_UNITS};
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::rng;
use crate::snn::calibrate::CalibrationMap;
use crate::snn::decode::decode_window;
use crate::snn::network::{NetworkConfig, MAX_NEURONS, MAX_WEIGHT};
use crate::snn::sim::simulate;
use crate::states::StateSamples;

/// Abstract weight and bias per hardware unit used by the abstract backends.
pub const DEFAULT_SCALE: f64 = 1.0 / 32.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightDomain {
    Continuous,
    /// Integer weights in `[-max, max]`.
    Integer { max: i32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capability {
    pub max_visible: usize,
    pub max_hidden: usize,
    /// Limit on `N + N_h`.
    pub max_units: usize,
    pub weight_domain: WeightDomain,
}

impl Capability {
    pub fn check(&self, n_visible: usize, n_hidden: usize) -> Result<()> {
        for (what, value, limit) in [
            ("visible units", n_visible, self.max_visible),
            ("hidden units", n_hidden, self.max_hidden),
            ("units", n_visible + n_hidden, self.max_units),
        ] {
            if value > limit {
                return Err(Error::Capacity { what, value, limit });
            }
        }
        Ok(())
    }
}

/// Abstract value of one hardware unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scale {
    pub weight: f64,
    pub bias: f64,
}

impl Default for Scale {
    fn default() -> Self {
        Self {
            weight: DEFAULT_SCALE,
            bias: DEFAULT_SCALE,
        }
    }
}

impl Scale {
    pub fn to_abstract(&self, params: &RbmParams) -> RbmParams {
        RbmParams {
            weights: &params.weights * self.weight,
            visible_bias: params.visible_bias.iter().map(|b| b * self.bias).collect(),
            hidden_bias: params.hidden_bias.iter().map(|b| b * self.bias).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRequest {
    /// Total samples, split evenly over the runs.
    pub n_samples: usize,
    pub runs: usize,
    pub seed: u64,
}

pub trait SamplingBackend: Send {
    fn name(&self) -> &'static str;
    fn capability(&self) -> Capability;
    fn scale(&self) -> Scale;
    /// Draws joint samples `z = (v, h)` for `params` given in hardware units.
    fn sample(&mut self, params: &RbmParams, request: &SampleRequest) -> Result<StateSamples>;
}

impl<T: SamplingBackend + ?Sized> SamplingBackend for Box<T> {
    fn name(&self) -> &'static str {
        (**self).name()
    }

    fn capability(&self) -> Capability {
        (**self).capability()
    }

    fn scale(&self) -> Scale {
        (**self).scale()
    }

    fn sample(&mut self, params: &RbmParams, request: &SampleRequest) -> Result<StateSamples> {
        (**self).sample(params, request)
    }
}

/// Every joint configuration once, weighted by its exact probability.
#[derive(Debug, Clone, Default)]
pub struct ExactBackend {
    pub scale: Scale,
}

impl SamplingBackend for ExactBackend {
    fn name(&self) -> &'static str {
        "exact"
    }

    fn capability(&self) -> Capability {
        Capability {
            max_visible: MAX_EXACT_UNITS,
            max_hidden: MAX_EXACT_UNITS,
            max_units: MAX_EXACT_UNITS,
            weight_domain: WeightDomain::Continuous,
        }
    }

    fn scale(&self) -> Scale {
        self.scale
    }

    fn sample(&mut self, params: &RbmParams, _request: &SampleRequest) -> Result<StateSamples> {
        self.capability().check(params.n_visible(), params.n_hidden())?;
        let p = exact_joint(&self.scale.to_abstract(params))?;
        let (n, nh) = (params.n_visible(), params.n_hidden());
        let mut rows = Vec::with_capacity(p.len() * (n + nh));
        for z in 0..p.len() {
            rows.extend(bits(z, n + nh));
        }
        StateSamples::from_rows(n, nh, rows)?.with_weights(p)
    }
}

/// Persistent block-Gibbs chains, one per run, warm-started across calls.
#[derive(Debug, Clone)]
pub struct GibbsBackend {
    pub scale: Scale,
    /// Sweeps discarded when a chain is created.
    pub burn_in: usize,
    /// Sweeps discarded after a parameter change on an existing chain.
    pub warm_burn_in: usize,
    pub thinning: usize,
    pub execution: Execution,
    /// Round weights to integers in `[-63, 63]` like the hardware.
    pub integer_weights: bool,
    chains: Vec<GibbsChain>,
}

impl Default for GibbsBackend {
    fn default() -> Self {
        Self {
            scale: Scale::default(),
            burn_in: 1000,
            warm_burn_in: 20,
            thinning: 1,
            execution: Execution::default(),
            integer_weights: false,
            chains: Vec::new(),
        }
    }
}

impl GibbsBackend {
    /// Discards all chain states.
    pub fn reset(&mut self) {
        self.chains.clear();
    }
}

impl SamplingBackend for GibbsBackend {
    fn name(&self) -> &'static str {
        "gibbs"
    }

    fn capability(&self) -> Capability {
        Capability {
            max_visible: crate::boltzmann::MAX_EXACT_VISIBLE,
            max_hidden: usize::MAX,
            max_units: usize::MAX,
            weight_domain: if self.integer_weights {
                WeightDomain::Integer { max: MAX_WEIGHT }
            } else {
                WeightDomain::Continuous
            },
        }
    }

    fn scale(&self) -> Scale {
        self.scale
    }

    fn sample(&mut self, params: &RbmParams, request: &SampleRequest) -> Result<StateSamples> {
        params.validate()?;
        self.capability().check(params.n_visible(), params.n_hidden())?;
        if request.n_samples == 0 || request.runs == 0 || self.thinning == 0 {
            return Err(Error::invalid("sample request", "samples, runs and thinning must be positive"));
        }
        let abstract_params = self.scale.to_abstract(params);
        let (n, nh) = (params.n_visible(), params.n_hidden());
        let shape_changed = self
            .chains
            .first()
            .is_some_and(|c| c.visible().len() != n || c.hidden().len() != nh);
        if shape_changed || self.chains.len() != request.runs {
            self.chains = (0..request.runs)
                .map(|r| GibbsChain::new(&abstract_params, rng::stream(request.seed, r as u64)))
                .collect();
            for chain in &mut self.chains {
                for _ in 0..self.burn_in {
                    chain.sweep();
                }
            }
        }
        let per_run = split_evenly(request.n_samples, request.runs);
        let (warm, thinning) = (self.warm_burn_in, self.thinning);
        let parts = par::map_mut(self.execution, &mut self.chains, |r, chain| {
            chain.set_params(&abstract_params);
            for _ in 0..warm {
                chain.sweep();
            }
            let mut out = StateSamples::with_capacity(n, nh, per_run[r]);
            let mut row = vec![0u8; n + nh];
            for _ in 0..per_run[r] {
                for _ in 0..thinning {
                    chain.sweep();
                }
                row[..n].copy_from_slice(chain.visible());
                row[n..].copy_from_slice(chain.hidden());
                out.push(&row);
            }
            out
        });
        let mut all = StateSamples::with_capacity(n, nh, request.n_samples);
        for part in &parts {
            all.extend(part)?;
        }
        Ok(all)
    }
}

/// Event-driven spiking network with a fixed calibration.
///
/// Weights are written as integers with any fractional remainder applied as a
/// real-valued offset; biases are realized through the leak potentials.
#[derive(Debug, Clone)]
pub struct SnnBackend {
    pub network: NetworkConfig,
    pub calibration: CalibrationMap,
    /// Abstract bias per hardware bias unit.
    pub bias_scale: f64,
    pub readout_interval: f64,
    /// Model time simulated before the first readout of each run.
    pub burn_in: f64,
    pub execution: Execution,
}

impl SnnBackend {
    pub fn new(network: NetworkConfig, calibration: CalibrationMap) -> Result<Self> {
        network.validate()?;
        if calibration.n_neurons() != network.n_neurons() {
            return Err(Error::Shape(format!(
                "calibration covers {} neurons, network has {}",
                calibration.n_neurons(),
                network.n_neurons()
            )));
        }
        let tau_ref = network.neurons[0].refractory_time;
        Ok(Self {
            network,
            calibration,
            bias_scale: DEFAULT_SCALE,
            readout_interval: tau_ref,
            burn_in: 50.0 * tau_ref,
            execution: Execution::default(),
        })
    }

    /// Network programmed with `params` (hardware units).
    pub fn program(&self, params: &RbmParams) -> Result<NetworkConfig> {
        let mut config = self.network.clone();
        let (n, nh) = (config.n_visible, config.n_hidden);
        if params.n_visible() != n || params.n_hidden() != nh {
            return Err(Error::Shape(format!(
                "parameters are {}x{}, network is {n}x{nh}",
                params.n_visible(),
                params.n_hidden()
            )));
        }
        let size = n + nh;
        let mut offsets = vec![vec![0.0; size]; size];
        let mut has_offsets = false;
        for i in 0..n {
            for j in 0..nh {
                let w = params.weights[(i, j)];
                let whole = w.round();
                if whole.abs() > f64::from(MAX_WEIGHT) {
                    return Err(Error::invalid(
                        format!("weights[{i}][{j}]"),
                        format!("{w} is outside ±{MAX_WEIGHT}"),
                    ));
                }
                config.set_coupling(i, j, whole as i32);
                let frac = w - whole;
                if frac != 0.0 {
                    has_offsets = true;
                    offsets[i][n + j] = frac;
                    offsets[n + j][i] = frac;
                }
            }
        }
        config.weight_offsets = if has_offsets { offsets } else { Vec::new() };
        for k in 0..size {
            let b = if k < n {
                params.visible_bias[k]
            } else {
                params.hidden_bias[k - n]
            };
            let incoming: f64 = (0..size).map(|r| config.effective_weight(k, r)).sum();
            let target = b * self.bias_scale - self.calibration.input_offsets[k] * incoming;
            config.biases[k] = self.calibration.bias_to_leak(k, target) - config.neurons[k].leak_potential;
        }
        config.validate()?;
        Ok(config)
    }
}

impl SamplingBackend for SnnBackend {
    fn name(&self) -> &'static str {
        "snn"
    }

    fn capability(&self) -> Capability {
        Capability {
            max_visible: crate::boltzmann::MAX_EXACT_VISIBLE,
            max_hidden: MAX_NEURONS,
            max_units: MAX_NEURONS,
            weight_domain: WeightDomain::Integer { max: MAX_WEIGHT },
        }
    }

    fn scale(&self) -> Scale {
        Scale {
            weight: self.calibration.mean_weight_factor(),
            bias: self.bias_scale,
        }
    }

    fn sample(&mut self, params: &RbmParams, request: &SampleRequest) -> Result<StateSamples> {
        self.capability().check(params.n_visible(), params.n_hidden())?;
        if request.n_samples == 0 || request.runs == 0 {
            return Err(Error::invalid("sample request", "samples and runs must be positive"));
        }
        let config = self.program(params)?;
        let per_run = split_evenly(request.n_samples, request.runs);
        let (interval, burn_in) = (self.readout_interval, self.burn_in);
        let parts = par::try_map_indexed(self.execution, request.runs, |r| {
            // Half an interval of slack keeps the readout count exact under rounding.
            let duration = burn_in + (per_run[r] as f64 + 0.5) * interval;
            let record = simulate(&config, duration, rng::mix(&[request.seed, r as u64]))?;
            decode_window(&record, &config, interval, burn_in)
        })?;
        let mut all = StateSamples::with_capacity(params.n_visible(), params.n_hidden(), request.n_samples);
        for part in &parts {
            all.extend(part)?;
        }
        Ok(all.with_readout_interval(interval))
    }
}
