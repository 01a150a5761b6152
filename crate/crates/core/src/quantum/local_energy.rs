use super::tfim::TfimSpec;
use crate::error::{Error, Result};

/// Regularizer added to every probability inside square-root ratios.
pub const DEFAULT_EPSILON: f64 = 1e-12;

/// Normalizes a probability (or count) vector over `2^N` states.
pub(crate) fn normalized(p_hat: &[f64], spec: &TfimSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    if p_hat.len() != spec.dim() {
        return Err(Error::Shape(format!(
            "distribution over {} states for a {}-spin chain",
            p_hat.len(),
            spec.n_spins
        )));
    }
    if p_hat.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::invalid("p_hat", "probabilities must be finite and non-negative"));
    }
    let total: f64 = p_hat.iter().sum();
    if total <= 0.0 {
        return Err(Error::Empty("distribution with zero total mass"));
    }
    Ok(p_hat.iter().map(|p| p / total).collect())
}

/// `E_loc(v) = -J Σ s_i s_{i+1} - h Σ_i √(p(v⁽ⁱ⁾) + ε) / √(p(v) + ε)`.
///
/// `p_hat` must be normalized; `v⁽ⁱ⁾` is `v` with spin `i` flipped.
pub fn local_energy(v: usize, p_hat: &[f64], spec: &TfimSpec, epsilon: f64) -> f64 {
    let mut e = spec.diagonal(v);
    if spec.field != 0.0 {
        let denom = (p_hat[v] + epsilon).sqrt();
        let flips: f64 = (0..spec.n_spins)
            .map(|i| (p_hat[v ^ (1 << i)] + epsilon).sqrt())
            .sum();
        e -= spec.field * flips / denom;
    }
    e
}

/// Local energies of every visible state for one distribution estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalEnergyTable {
    pub epsilon: f64,
    pub probabilities: Vec<f64>,
    pub local_energies: Vec<f64>,
}

impl LocalEnergyTable {
    pub fn new(p_hat: &[f64], spec: &TfimSpec, epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::invalid("epsilon", "must be finite and non-negative"));
        }
        let probabilities = normalized(p_hat, spec)?;
        let local_energies = (0..spec.dim())
            .map(|v| {
                if probabilities[v] > 0.0 || epsilon > 0.0 {
                    local_energy(v, &probabilities, spec, epsilon)
                } else {
                    // Unobserved state without regularization: no weight, no defined ratio.
                    spec.diagonal(v)
                }
            })
            .collect();
        Ok(Self {
            epsilon,
            probabilities,
            local_energies,
        })
    }

    /// `E_θ = Σ_v p(v) E_loc(v)`.
    pub fn mean(&self) -> f64 {
        self.probabilities
            .iter()
            .zip(&self.local_energies)
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, e)| p * e)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyEstimate {
    pub energy: f64,
    /// `|E - E₀| / N` when a reference energy was supplied.
    pub delta_e: Option<f64>,
}

/// Variational energy of `|ψ⟩ = Σ_v √p(v) |v⟩`.
pub fn variational_energy(
    p_hat: &[f64],
    spec: &TfimSpec,
    epsilon: f64,
    reference: Option<f64>,
) -> Result<EnergyEstimate> {
    let energy = LocalEnergyTable::new(p_hat, spec, epsilon)?.mean();
    Ok(EnergyEstimate {
        energy,
        delta_e: reference.map(|e0| energy_error(energy, e0, spec.n_spins)),
    })
}

/// Energy deviation per spin, `|E - E₀| / N`.
pub fn energy_error(energy: f64, reference: f64, n_spins: usize) -> f64 {
    (energy - reference).abs() / n_spins as f64
}
