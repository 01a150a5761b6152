use std::io::Write;

use serde::Serialize;

use super::eigen::GroundStateSolution;
use super::local_energy::normalized;
use super::spin;
use super::tfim::TfimSpec;
use crate::error::{Error, Result};
use crate::lsq::{levenberg_marquardt, LmOptions};

/// Physical observables of the state `Σ_v √p(v) |v⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableSet {
    /// `⟨σx⟩` averaged over sites.
    pub magnetization_x: f64,
    /// `C_zz(d)` for `d = 0..N`.
    pub czz: Vec<f64>,
    /// Fit of `C_zz(d)` over `d ≤ ⌊N/2⌋`; `None` if the fit failed.
    pub correlation_fit: Option<CorrelationFit>,
    /// `(m, P(m))` with `m = (n_up - n_down)/2`.
    pub magnetization_histogram: Vec<(f64, f64)>,
}

/// `Ĉ(d) = A exp(-d/ξ) + B` with standard deviations from the fit covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationFit {
    pub amplitude: f64,
    pub xi: f64,
    pub offset: f64,
    pub amplitude_err: f64,
    pub xi_err: f64,
    pub offset_err: f64,
    /// False when the data are flat and `ξ` carries no information.
    pub identifiable: bool,
    pub residual_norm: f64,
}

pub fn observables(p_hat: &[f64], spec: &TfimSpec, epsilon: f64) -> Result<ObservableSet> {
    let p = normalized(p_hat, spec)?;
    let n = spec.n_spins;
    let dim = spec.dim();

    let mut sx = 0.0;
    for v in 0..dim {
        for i in 0..n {
            sx += ((p[v] + epsilon) * (p[v ^ (1 << i)] + epsilon)).sqrt();
        }
    }
    let magnetization_x = sx / n as f64;

    let czz: Vec<f64> = (0..n)
        .map(|d| {
            let mut c = 0.0;
            for (v, pv) in p.iter().enumerate().filter(|(_, pv)| **pv > 0.0) {
                let s: f64 = (0..n).map(|i| spin(v, i) * spin(v, (i + d) % n)).sum();
                c += pv * s;
            }
            c / n as f64
        })
        .collect();

    let points: Vec<(f64, f64)> = (0..=n / 2).map(|d| (d as f64, czz[d])).collect();
    let correlation_fit = fit_correlation_length(&points).ok();

    Ok(ObservableSet {
        magnetization_x,
        czz,
        correlation_fit,
        magnetization_histogram: magnetization_histogram(&p, n),
    })
}

/// Probability of each z-magnetization `m = (n_up - n_down)/2`.
pub fn magnetization_histogram(p: &[f64], n_spins: usize) -> Vec<(f64, f64)> {
    let total: f64 = p.iter().sum();
    let mut hist = vec![0.0; n_spins + 1];
    for (v, pv) in p.iter().enumerate() {
        hist[v.count_ones() as usize] += pv / total;
    }
    hist.into_iter()
        .enumerate()
        .map(|(up, prob)| (up as f64 - n_spins as f64 / 2.0, prob))
        .collect()
}

/// Nonlinear least-squares fit of `A exp(-d/ξ) + B` to `(d, C_zz(d))` pairs.
///
/// The search starts from a scan over `ξ` with `(A, B)` solved linearly, then
/// refines all three parameters jointly.
pub fn fit_correlation_length(points: &[(f64, f64)]) -> Result<CorrelationFit> {
    if points.len() < 4 {
        return Err(Error::invalid(
            "czz",
            format!("need at least 4 distance points, got {}", points.len()),
        ));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let (lo, hi) = ys
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| (lo.min(y), hi.max(y)));
    let scale = ys.iter().map(|y| y.abs()).fold(0.0, f64::max).max(1e-300);
    if hi - lo <= 1e-13 * scale {
        return Ok(CorrelationFit {
            amplitude: 0.0,
            xi: f64::NAN,
            offset: ys.iter().sum::<f64>() / ys.len() as f64,
            amplitude_err: 0.0,
            xi_err: f64::NAN,
            offset_err: 0.0,
            identifiable: false,
            residual_norm: 0.0,
        });
    }

    let mut best: Option<(f64, [f64; 3])> = None;
    let mut xi = 0.05;
    while xi < 1e3 {
        if let Some((a, b, rss)) = linear_amplitudes(&xs, &ys, xi) {
            if best.is_none_or(|(r, _)| rss < r) {
                best = Some((rss, [a, xi, b]));
            }
        }
        xi *= 1.25;
    }
    let (_, start) = best.ok_or_else(|| Error::invalid("czz", "degenerate distance points"))?;

    let fit = levenberg_marquardt(&xs, &ys, &start, &LmOptions::default(), |p, d| {
        let e = (-d / p[1]).exp();
        (p[0] * e + p[2], vec![e, p[0] * e * d / (p[1] * p[1]), 1.0])
    })?;
    let errs = fit.std_errors().unwrap_or_else(|| vec![f64::NAN; 3]);
    Ok(CorrelationFit {
        amplitude: fit.params[0],
        xi: fit.params[1],
        offset: fit.params[2],
        amplitude_err: errs[0],
        xi_err: errs[1],
        offset_err: errs[2],
        identifiable: fit.params[0].abs() > 1e-12 * scale,
        residual_norm: fit.residual_norm(),
    })
}

/// For fixed `ξ`, the least-squares `(A, B)` and residual sum of squares.
fn linear_amplitudes(xs: &[f64], ys: &[f64], xi: f64) -> Option<(f64, f64, f64)> {
    let n = xs.len() as f64;
    let es: Vec<f64> = xs.iter().map(|d| (-d / xi).exp()).collect();
    let (se, see) = es.iter().fold((0.0, 0.0), |(s, ss), e| (s + e, ss + e * e));
    let sy: f64 = ys.iter().sum();
    let sey: f64 = es.iter().zip(ys).map(|(e, y)| e * y).sum();
    let det = see * n - se * se;
    if det.abs() < 1e-300 {
        return None;
    }
    let a = (sey * n - se * sy) / det;
    let b = (see * sy - se * sey) / det;
    let rss = es
        .iter()
        .zip(ys)
        .map(|(e, y)| (a * e + b - y).powi(2))
        .sum();
    Some((a, b, rss))
}

/// Overlap `F = Σ_v √p̂(v) ψ₀(v)`; the infidelity is `1 - F`.
pub fn fidelity(p_hat: &[f64], reference: &GroundStateSolution) -> Result<f64> {
    if p_hat.len() != reference.amplitudes.len() {
        return Err(Error::Shape(format!(
            "distribution over {} states, reference over {}",
            p_hat.len(),
            reference.amplitudes.len()
        )));
    }
    if p_hat.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::invalid("p_hat", "probabilities must be finite and non-negative"));
    }
    let total: f64 = p_hat.iter().sum();
    if total <= 0.0 {
        return Err(Error::Empty("distribution with zero total mass"));
    }
    let f: f64 = p_hat
        .iter()
        .zip(&reference.amplitudes)
        .map(|(p, a)| (p / total).sqrt() * a)
        .sum();
    Ok(f.clamp(0.0, 1.0))
}

/// One row of the phase-diagram table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservableRow {
    pub h_over_j: f64,
    pub sigma_x: f64,
    pub xi: f64,
    pub xi_err: f64,
    pub czz_nn: f64,
    pub energy: f64,
    pub delta_e: f64,
    pub infidelity: f64,
}

pub fn write_observables_csv<W: Write>(rows: &[ObservableRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::exact_ground_state;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn x_polarized_product_state() {
        let spec = TfimSpec::new(6, 1.0, 1e6).unwrap();
        let gs = exact_ground_state(&spec).unwrap();
        let obs = observables(&gs.probabilities(), &spec, 1e-12).unwrap();
        assert!((obs.magnetization_x - 1.0).abs() < 1e-6);
        for d in 1..6 {
            assert!(obs.czz[d].abs() < 1e-6);
        }
    }

    #[test]
    fn ghz_like_state() {
        let spec = TfimSpec::new(5, 1.0, 0.0).unwrap();
        let mut p = vec![0.0; 32];
        p[0] = 0.5;
        p[31] = 0.5;
        let obs = observables(&p, &spec, 0.0).unwrap();
        assert_eq!(obs.magnetization_x, 0.0);
        assert!(obs.czz.iter().all(|c| (c - 1.0).abs() < 1e-15));
        let hist = &obs.magnetization_histogram;
        assert_eq!(hist.first().unwrap(), &(-2.5, 0.5));
        assert_eq!(hist.last().unwrap(), &(2.5, 0.5));
    }

    #[test]
    fn czz_at_zero_distance_is_one() {
        let spec = TfimSpec::new(4, 1.0, 1.0).unwrap();
        let p: Vec<f64> = (0..16).map(|v| 1.0 + v as f64).collect();
        let obs = observables(&p, &spec, 1e-12).unwrap();
        assert_relative_eq!(obs.czz[0], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn exact_fit_recovery() {
        let points: Vec<(f64, f64)> = (0..6)
            .map(|d| (d as f64, (-(d as f64) / 2.0).exp() + 0.1))
            .collect();
        let fit = fit_correlation_length(&points).unwrap();
        assert!((fit.amplitude - 1.0).abs() < 1e-8);
        assert!((fit.xi - 2.0).abs() < 1e-8);
        assert!((fit.offset - 0.1).abs() < 1e-8);
        assert!(fit.identifiable);
    }

    #[test]
    fn flat_data_flags_unidentifiable() {
        let points: Vec<(f64, f64)> = (0..5).map(|d| (d as f64, 0.4)).collect();
        let fit = fit_correlation_length(&points).unwrap();
        assert!(!fit.identifiable);
        assert!(fit_correlation_length(&points[..3]).is_err());
    }

    #[test]
    fn noisy_fit_within_three_standard_deviations() {
        let normal = Normal::new(0.0, 0.01).unwrap();
        let trials = 200;
        let mut inside = 0;
        for seed in 0..trials {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let points: Vec<(f64, f64)> = (0..10)
                .map(|d| {
                    let d = d as f64;
                    (d, (-d / 2.0).exp() + 0.1 + normal.sample(&mut rng))
                })
                .collect();
            let fit = fit_correlation_length(&points).unwrap();
            if (fit.xi - 2.0).abs() <= 3.0 * fit.xi_err {
                inside += 1;
            }
        }
        // A 3σ interval covers ~99.7% for a Gaussian estimator; allow for nonlinearity.
        assert!(inside as f64 / trials as f64 > 0.95, "{inside}/{trials}");
    }

    #[test]
    fn fidelity_limits_and_direct_sum() {
        let spec = TfimSpec::new(3, 1.0, 1.0).unwrap();
        let gs = exact_ground_state(&spec).unwrap();
        assert_relative_eq!(fidelity(&gs.probabilities(), &gs).unwrap(), 1.0, epsilon = 1e-12);

        let direct: f64 = gs.amplitudes.iter().map(|a| (1.0f64 / 8.0).sqrt() * a).sum();
        assert_relative_eq!(fidelity(&[1.0; 8], &gs).unwrap(), direct, epsilon = 1e-14);

        let mut disjoint = GroundStateSolution {
            energy: 0.0,
            amplitudes: vec![0.0; 8],
        };
        disjoint.amplitudes[0] = 1.0;
        let mut p = vec![0.0; 8];
        p[7] = 1.0;
        assert_eq!(fidelity(&p, &disjoint).unwrap(), 0.0);
    }
}
