//! Small dense Levenberg-Marquardt solver for curve fits with a handful of parameters.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop when the relative decrease of the residual sum of squares falls below this.
    pub ftol: f64,
    /// Stop when the relative parameter step falls below this.
    pub xtol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            ftol: 1e-15,
            xtol: 1e-14,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmFit {
    pub params: Vec<f64>,
    /// Residual sum of squares at `params`.
    pub rss: f64,
    /// `s² (JᵀJ)⁻¹` with `s² = rss / (n - k)`; `None` when singular or `n ≤ k`.
    pub covariance: Option<DMatrix<f64>>,
    pub iterations: usize,
}

impl LmFit {
    pub fn residual_norm(&self) -> f64 {
        self.rss.sqrt()
    }

    pub fn std_errors(&self) -> Option<Vec<f64>> {
        self.covariance
            .as_ref()
            .map(|c| (0..c.nrows()).map(|i| c[(i, i)].max(0.0).sqrt()).collect())
    }
}

/// Fits `model(params, x) -> (value, ∂value/∂params)` to `(x, y)` pairs.
///
/// Returns [`Error::FitNotConverged`] carrying the best iterate when the
/// iteration budget runs out.
pub fn levenberg_marquardt<F>(
    xs: &[f64],
    ys: &[f64],
    initial: &[f64],
    options: &LmOptions,
    model: F,
) -> Result<LmFit>
where
    F: Fn(&[f64], f64) -> (f64, Vec<f64>),
{
    let n = xs.len();
    let k = initial.len();
    if n != ys.len() {
        return Err(Error::Shape(format!("{n} x-values for {} y-values", ys.len())));
    }
    if n < k {
        return Err(Error::invalid("data", format!("{n} points cannot determine {k} parameters")));
    }

    let evaluate = |p: &[f64]| -> (DVector<f64>, DMatrix<f64>) {
        let mut r = DVector::zeros(n);
        let mut jac = DMatrix::zeros(n, k);
        for (row, (&x, &y)) in xs.iter().zip(ys).enumerate() {
            let (f, grad) = model(p, x);
            r[row] = f - y;
            for (col, g) in grad.iter().enumerate() {
                jac[(row, col)] = *g;
            }
        }
        (r, jac)
    };

    let mut params = initial.to_vec();
    let (mut r, mut jac) = evaluate(&params);
    let mut rss = r.norm_squared();
    if !rss.is_finite() {
        return Err(Error::invalid("initial guess", "model is not finite at the initial parameters"));
    }
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < options.max_iterations {
        iterations += 1;
        if rss == 0.0 {
            converged = true;
            break;
        }
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;
        let mut accepted = false;
        for _ in 0..40 {
            let mut a = jtj.clone();
            for d in 0..k {
                a[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&(-&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = params.iter().zip(step.iter()).map(|(p, s)| p + s).collect();
            let (r_new, jac_new) = evaluate(&trial);
            let rss_new = r_new.norm_squared();
            if rss_new.is_finite() && rss_new <= rss {
                let rel_f = (rss - rss_new) / rss.max(f64::MIN_POSITIVE);
                let step_norm = step.norm();
                let param_norm = params.iter().map(|p| p * p).sum::<f64>().sqrt();
                params = trial;
                r = r_new;
                jac = jac_new;
                rss = rss_new;
                lambda = (lambda / 3.0).max(1e-15);
                accepted = true;
                if rel_f < options.ftol || step_norm < options.xtol * (param_norm + options.xtol) {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            // No downhill step at any damping: a (numerical) minimum.
            converged = true;
        }
        if converged {
            break;
        }
    }

    if !converged {
        return Err(Error::FitNotConverged {
            iterations,
            residual: rss.sqrt(),
            best: params,
        });
    }

    let covariance = if n > k {
        let s2 = rss / (n - k) as f64;
        (jac.transpose() * &jac).try_inverse().map(|inv| inv * s2)
    } else {
        None
    };
    Ok(LmFit {
        params,
        rss,
        covariance,
        iterations,
    })
}
