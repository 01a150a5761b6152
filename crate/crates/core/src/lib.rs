//! Spiking-network sampling as a variational ansatz for quantum ground states.
//!
//! The crate is organised around the pieces of the variational loop:
//!
//! - [`snn`]: event-driven leaky integrate-and-fire sampler with Poisson noise,
//!   state decoding and the physical-to-abstract calibration.
//! - [`boltzmann`]: exact and Gibbs-sampled bipartite Boltzmann machines, plus
//!   Kullback-Leibler divergence on visible-state histograms.
//! - [`quantum`]: transverse-field Ising Hamiltonian, exact ground states,
//!   local energies and observables.
//! - [`learner`]: sampling backends, gradient estimation, Adam and the train loop.
//! - [`hardware`]: weight grids, drift, pseudo-updates and the limitation studies.
//!
//! Data-parallel loops (independent chains, sampling runs, sweep points) go
//! through [`par`], which uses rayon when the `parallel` feature is enabled and
//! runs sequentially otherwise. Both paths produce identical results.

pub mod boltzmann;
pub mod config;
pub mod error;
pub mod hardware;
pub mod learner;
pub mod lsq;
pub mod par;
pub mod quantum;
pub mod rng;
pub mod snn;
pub mod states;

pub use error::{Error, Result};
