//! Leaky integrate-and-fire sampling networks.
//!
//! A network of current-based LIF neurons driven by Poisson background noise
//! samples from an approximately Boltzmann distribution when its spike trains
//! are read out as binary states. [`calibrate`] maps the physical leak
//! potentials and integer weights to abstract biases and couplings.

pub mod calibrate;
pub mod decode;
pub mod network;
pub mod neuron;
pub mod sim;

pub use calibrate::{
    calibrate, fit_logistic, measure_activation, ActivationCurve, ActivationFit, CalibrationMap,
    CalibrationOptions,
};
pub use decode::{decode_states, decode_window};
pub use network::{NetworkConfig, NoiseMode, NoisePoolConfig, MAX_NEURONS, MAX_WEIGHT};
pub use neuron::NeuronParams;
pub use sim::{simulate, Spike, SpikeRecord};
