//! Energy gradient from joint samples.
//!
//! For `ψ(v) = √p_θ(v)` the variational energy gradient is
//! `∂E/∂θ = ⟨(E_loc(v) - E_θ) ∂_θ log p_θ(v)⟩`, which for the Boltzmann
//! parameterization becomes `⟨(E_loc - E_θ) z_i z_j⟩` for couplings and
//! `⟨(E_loc - E_θ) z_k⟩` for biases, averaged over joint samples `z = (v, h)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::quantum::{LocalEnergyTable, TfimSpec};
use crate::states::StateSamples;

/// Gradient in abstract parameter units.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    /// `N × N_h`, the only non-zero block of the coupling gradient.
    pub weights: DMatrix<f64>,
    pub visible_bias: Vec<f64>,
    pub hidden_bias: Vec<f64>,
    /// `Ê = Σ_v p̂(v) E_loc(v)`.
    pub energy: f64,
    /// Normalized visible histogram `p̂` the estimate was built from.
    pub distribution: Vec<f64>,
    pub n_samples: usize,
}

impl GradientEstimate {
    /// Weights (row-major), then visible and hidden biases.
    pub fn flatten(&self) -> Vec<f64> {
        let (n, nh) = (self.weights.nrows(), self.weights.ncols());
        let mut out = Vec::with_capacity(n * nh + n + nh);
        for i in 0..n {
            for j in 0..nh {
                out.push(self.weights[(i, j)]);
            }
        }
        out.extend(&self.visible_bias);
        out.extend(&self.hidden_bias);
        out
    }
}

/// Two passes over the samples: the visible histogram and its local energies,
/// then the covariance-weighted averages, aggregated per visible state.
pub fn estimate_gradient(samples: &StateSamples, spec: &TfimSpec, epsilon: f64) -> Result<GradientEstimate> {
    if samples.is_empty() {
        return Err(Error::Empty("gradient estimate needs at least one sample"));
    }
    let (n, nh) = (samples.n_visible(), samples.n_hidden());
    if n != spec.n_spins {
        return Err(Error::Shape(format!(
            "{n} visible units for a {}-spin chain",
            spec.n_spins
        )));
    }

    let hist = samples.visible_histogram()?;
    let table = LocalEnergyTable::new(hist.counts(), spec, epsilon)?;
    let energy = table.mean();

    let dim = 1usize << n;
    let mut mass = vec![0.0; dim];
    let mut hidden_mass = vec![0.0; dim * nh];
    for k in 0..samples.len() {
        let w = samples.weight(k);
        let row = samples.row(k);
        let v = samples.visible_index(k);
        mass[v] += w;
        let acc = &mut hidden_mass[v * nh..(v + 1) * nh];
        for (a, &hj) in acc.iter_mut().zip(&row[n..]) {
            if hj != 0 {
                *a += w;
            }
        }
    }
    let total = samples.total_weight();

    let mut weights = DMatrix::zeros(n, nh);
    let mut visible_bias = vec![0.0; n];
    let mut hidden_bias = vec![0.0; nh];
    for v in 0..dim {
        if mass[v] == 0.0 {
            continue;
        }
        let centered = (table.local_energies[v] - energy) / total;
        let hm = &hidden_mass[v * nh..(v + 1) * nh];
        for (j, &h) in hm.iter().enumerate() {
            hidden_bias[j] += centered * h;
        }
        for (i, b) in visible_bias.iter_mut().enumerate() {
            if (v >> i) & 1 == 1 {
                *b += centered * mass[v];
                for (j, &h) in hm.iter().enumerate() {
                    weights[(i, j)] += centered * h;
                }
            }
        }
    }
    Ok(GradientEstimate {
        weights,
        visible_bias,
        hidden_bias,
        energy,
        distribution: table.probabilities,
        n_samples: samples.len(),
    })
}
