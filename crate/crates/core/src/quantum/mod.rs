//! Transverse-field Ising chain: Hamiltonian, exact ground states, local
//! energies and observables evaluated on visible-state distributions.
//!
//! Basis convention: spin `i` is bit `i` of the state index; a set bit is
//! `|↑⟩` with `s_i = +1`.

mod eigen;
mod local_energy;
mod observables;
mod tfim;

pub use eigen::{exact_ground_state, GroundStateSolution, DENSE_SPIN_LIMIT, MAX_SPINS};
pub use local_energy::{
    energy_error, local_energy, variational_energy, EnergyEstimate, LocalEnergyTable,
    DEFAULT_EPSILON,
};
pub use observables::{
    fidelity, fit_correlation_length, magnetization_histogram, observables, write_observables_csv,
    CorrelationFit, ObservableRow, ObservableSet,
};
pub use tfim::{build_hamiltonian, build_hamiltonian_with, SparseSymmetric, TfimSpec};

/// `s_i ∈ {+1, -1}` of spin `i` in basis state `state`.
#[inline]
pub fn spin(state: usize, i: usize) -> f64 {
    if (state >> i) & 1 == 1 {
        1.0
    } else {
        -1.0
    }
}
