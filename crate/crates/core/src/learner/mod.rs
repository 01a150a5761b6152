//! Variational ground-state learning.
//!
//! Each iteration writes the current parameters to a sampling backend, draws
//! joint samples, estimates the energy gradient from them and applies an Adam
//! step with a decaying learning rate to continuous master parameters.

pub mod adam;
pub mod backend;
pub mod gradient;
pub mod train;

pub use adam::{adam_step, lr_schedule, AdamState};
pub use backend::{
    Capability, ExactBackend, GibbsBackend, SampleRequest, SamplingBackend, Scale, SnnBackend, WeightDomain,
    DEFAULT_SCALE,
};
pub use gradient::{estimate_gradient, GradientEstimate};
pub use train::{
    flatten, quantize, train, Checkpoint, TraceRow, Trainer, TrainingConfig, TrainingOutcome, TrainingTrace,
};
