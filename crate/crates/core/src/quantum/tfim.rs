use serde::{Deserialize, Serialize};

use super::spin;
use crate::error::{ensure_finite, Error, Result};
use crate::par::{self, Execution};

/// Periodic transverse-field Ising chain `H = -J Σ σz_i σz_{i+1} - h Σ σx_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TfimSpec {
    pub n_spins: usize,
    pub coupling: f64,
    pub field: f64,
}

impl TfimSpec {
    pub fn new(n_spins: usize, coupling: f64, field: f64) -> Result<Self> {
        let spec = Self {
            n_spins,
            coupling,
            field,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Rejects chains shorter than 3 spins (doubled bonds) and non-stoquastic signs.
    pub fn validate(&self) -> Result<()> {
        if self.n_spins < 3 {
            return Err(Error::invalid(
                "n_spins",
                format!("periodic chain needs at least 3 spins, got {}", self.n_spins),
            ));
        }
        if self.n_spins > super::MAX_SPINS {
            return Err(Error::Capacity {
                what: "n_spins",
                value: self.n_spins,
                limit: super::MAX_SPINS,
            });
        }
        ensure_finite("coupling", self.coupling)?;
        ensure_finite("field", self.field)?;
        if self.coupling < 0.0 {
            return Err(Error::invalid("coupling", "J must be non-negative (ferromagnetic)"));
        }
        if self.field < 0.0 {
            return Err(Error::invalid("field", "h must be non-negative for stoquasticity"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        1 << self.n_spins
    }

    /// Ising part `-J Σ_i s_i s_{i+1 mod N}` of basis state `state`.
    pub fn diagonal(&self, state: usize) -> f64 {
        let n = self.n_spins;
        -self.coupling
            * (0..n)
                .map(|i| spin(state, i) * spin(state, (i + 1) % n))
                .sum::<f64>()
    }
}

/// Compressed-sparse-row symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymmetric {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseSymmetric {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(col, _)| col == c).map_or(0.0, |(_, v)| v)
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate() {
            *out = self.row(r).map(|(c, v)| v * x[c]).sum();
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                m[(r, c)] += v;
            }
        }
        m
    }
}

/// Builds `H` in the computational basis: Ising energies on the diagonal and
/// `-h` between states differing in exactly one spin.
pub fn build_hamiltonian(spec: &TfimSpec) -> Result<SparseSymmetric> {
    build_hamiltonian_with(spec, Execution::Parallel)
}

pub fn build_hamiltonian_with(spec: &TfimSpec, exec: Execution) -> Result<SparseSymmetric> {
    spec.validate()?;
    let n = spec.n_spins;
    let dim = spec.dim();
    let rows = par::map_indexed(exec, dim, |state| {
        let mut entries = Vec::with_capacity(n + 1);
        entries.push((state, spec.diagonal(state)));
        if spec.field != 0.0 {
            for i in 0..n {
                entries.push((state ^ (1 << i), -spec.field));
            }
        }
        entries.sort_by_key(|&(c, _)| c);
        entries
    });
    let mut row_ptr = Vec::with_capacity(dim + 1);
    let mut cols = Vec::with_capacity(dim * (n + 1));
    let mut vals = Vec::with_capacity(dim * (n + 1));
    row_ptr.push(0);
    for row in rows {
        for (c, v) in row {
            cols.push(c);
            vals.push(v);
        }
        row_ptr.push(cols.len());
    }
    Ok(SparseSymmetric {
        dim,
        row_ptr,
        cols,
        vals,
    })
}
