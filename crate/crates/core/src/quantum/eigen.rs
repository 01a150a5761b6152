use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};

use super::tfim::{build_hamiltonian, SparseSymmetric, TfimSpec};
use crate::error::{Error, Result};

/// Chains up to this length use a dense symmetric eigensolver; longer chains use Lanczos.
pub const DENSE_SPIN_LIMIT: usize = 8;

/// Largest chain accepted by the exact solvers.
pub const MAX_SPINS: usize = 18;

const LANCZOS_TOL: f64 = 1e-12;
const MAX_KRYLOV: usize = 200;
const MAX_RESTARTS: usize = 20;

/// Lowest eigenpair of the Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundStateSolution {
    pub energy: f64,
    /// Unit-norm amplitudes with the global sign chosen so their sum is non-negative.
    pub amplitudes: Vec<f64>,
}

impl GroundStateSolution {
    /// `|ψ₀(v)|²`, the target visible distribution.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a * a).collect()
    }

    /// Writes `state,amplitude` rows (bitstring lists spin 0 first).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.amplitudes.len().trailing_zeros() as usize;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["state", "amplitude"])?;
        for (idx, a) in self.amplitudes.iter().enumerate() {
            let state: String = (0..n)
                .map(|i| if (idx >> i) & 1 == 1 { '1' } else { '0' })
                .collect();
            w.write_record([state, format!("{a:e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn exact_ground_state(spec: &TfimSpec) -> Result<GroundStateSolution> {
    let h = build_hamiltonian(spec)?;
    let (energy, mut amplitudes) = if spec.n_spins <= DENSE_SPIN_LIMIT {
        dense_ground_state(&h)
    } else {
        lanczos_ground_state(&h)?
    };
    let norm = amplitudes.iter().map(|a| a * a).sum::<f64>().sqrt();
    let sign = if amplitudes.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    amplitudes.iter_mut().for_each(|a| *a *= sign / norm);
    Ok(GroundStateSolution { energy, amplitudes })
}

fn dense_ground_state(h: &SparseSymmetric) -> (f64, Vec<f64>) {
    let eig = SymmetricEigen::new(h.to_dense());
    let (k, &energy) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty spectrum");
    (energy, eig.eigenvectors.column(k).iter().copied().collect())
}

/// Lanczos with full reorthogonalization, restarted from the current Ritz vector.
///
/// The start vector is uniform, which overlaps the non-negative ground state
/// of a stoquastic Hamiltonian.
fn lanczos_ground_state(h: &SparseSymmetric) -> Result<(f64, Vec<f64>)> {
    let dim = h.dim();
    let mut start = vec![1.0 / (dim as f64).sqrt(); dim];
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_RESTARTS {
        let (theta, x) = lanczos_pass(h, &start);
        let mut hx = vec![0.0; dim];
        h.matvec(&x, &mut hx);
        residual = hx
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - theta * b).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual <= LANCZOS_TOL * theta.abs().max(1.0) {
            return Ok((theta, x));
        }
        start = x;
    }
    Err(Error::EigenNotConverged { residual })
}

fn lanczos_pass(h: &SparseSymmetric, start: &[f64]) -> (f64, Vec<f64>) {
    let dim = h.dim();
    let m_max = MAX_KRYLOV.min(dim);
    let norm = start.iter().map(|a| a * a).sum::<f64>().sqrt();
    let mut basis: Vec<Vec<f64>> = vec![start.iter().map(|a| a / norm).collect()];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![0.0; dim];
    let mut best = (f64::INFINITY, Vec::new());

    for j in 0..m_max {
        h.matvec(&basis[j], &mut w);
        let a = dot(&w, &basis[j]);
        alpha.push(a);
        // Full reorthogonalization (twice for stability).
        for _ in 0..2 {
            for q in &basis {
                let c = dot(&w, q);
                w.iter_mut().zip(q).for_each(|(wi, qi)| *wi -= c * qi);
            }
        }
        let b = dot(&w, &w).sqrt();
        let (theta, y) = tridiagonal_lowest(&alpha, &beta);
        let ritz_residual = b * y.last().copied().unwrap_or(0.0).abs();
        best = (theta, y);
        if ritz_residual <= LANCZOS_TOL * theta.abs().max(1.0) || b < 1e-14 || j + 1 == m_max {
            break;
        }
        beta.push(b);
        basis.push(w.iter().map(|x| x / b).collect());
    }

    let (theta, y) = best;
    let mut x = vec![0.0; dim];
    for (q, c) in basis.iter().zip(&y) {
        x.iter_mut().zip(q).for_each(|(xi, qi)| *xi += c * qi);
    }
    let n = dot(&x, &x).sqrt();
    x.iter_mut().for_each(|xi| *xi /= n);
    (theta, x)
}

fn tridiagonal_lowest(alpha: &[f64], beta: &[f64]) -> (f64, Vec<f64>) {
    let m = alpha.len();
    let t = DMatrix::from_fn(m, m, |r, c| {
        if r == c {
            alpha[r]
        } else if r + 1 == c {
            beta[r]
        } else if c + 1 == r {
            beta[c]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(t);
    let (k, &theta) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty tridiagonal");
    (theta, eig.eigenvectors.column(k).iter().copied().collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn aligned_pair_at_zero_field() {
        let gs = exact_ground_state(&TfimSpec::new(3, 1.0, 0.0).unwrap()).unwrap();
        assert_relative_eq!(gs.energy, -3.0, epsilon = 1e-12);
        for (idx, a) in gs.amplitudes.iter().enumerate() {
            if idx != 0 && idx != 0b111 {
                assert!(a.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn product_state_along_x() {
        let gs = exact_ground_state(&TfimSpec::new(3, 0.0, 1.0).unwrap()).unwrap();
        assert_relative_eq!(gs.energy, -3.0, epsilon = 1e-12);
        for a in &gs.amplitudes {
            assert_relative_eq!(*a, 1.0 / 8f64.sqrt(), epsilon = 1e-12);
        }
    }

    #[test]
    fn field_dominated_limit() {
        let (n, h) = (5, 1e3);
        let gs = exact_ground_state(&TfimSpec::new(n, 1.0, h).unwrap()).unwrap();
        let limit = -(n as f64) * h;
        assert!(((gs.energy - limit) / limit).abs() < 1e-2 / h);
    }

    #[test]
    fn amplitudes_non_negative_and_flip_symmetric() {
        let spec = TfimSpec::new(6, 1.0, 0.8).unwrap();
        let gs = exact_ground_state(&spec).unwrap();
        let norm: f64 = gs.amplitudes.iter().map(|a| a * a).sum();
        assert_relative_eq!(norm, 1.0, epsilon = 1e-12);
        let mask = spec.dim() - 1;
        for (idx, a) in gs.amplitudes.iter().enumerate() {
            assert!(*a > -1e-12);
            assert_relative_eq!(*a, gs.amplitudes[idx ^ mask], epsilon = 1e-10);
        }
    }

    #[test]
    fn lanczos_agrees_with_dense() {
        let spec = TfimSpec::new(7, 1.0, 1.1).unwrap();
        let h = build_hamiltonian(&spec).unwrap();
        let (e_dense, _) = dense_ground_state(&h);
        let (e_lanczos, x) = lanczos_ground_state(&h).unwrap();
        assert_relative_eq!(e_dense, e_lanczos, epsilon = 1e-10);
        assert_relative_eq!(dot(&x, &x), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn csv_lists_every_basis_state() {
        let gs = exact_ground_state(&TfimSpec::new(3, 1.0, 1.0).unwrap()).unwrap();
        let mut buf = Vec::new();
        gs.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 9);
    }
}
