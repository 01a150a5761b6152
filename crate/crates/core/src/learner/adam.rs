//! Adam with an exponentially decaying step size.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    /// Number of completed steps.
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// Fresh state with `β₁ = 0.9`, `β₂ = 0.999`, `ε = 1e-8`.
    pub fn new(n_params: usize) -> Self {
        Self {
            first_moment: vec![0.0; n_params],
            second_moment: vec![0.0; n_params],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn len(&self) -> usize {
        self.first_moment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first_moment.is_empty()
    }
}

/// One Adam update; returns the parameter change `-η m̂ / (√v̂ + ε)`.
///
/// Moments are kept uncorrected and the bias correction is applied to the
/// read-out only.
pub fn adam_step(state: &mut AdamState, gradient: &[f64], lr: f64) -> Result<Vec<f64>> {
    if gradient.len() != state.len() {
        return Err(Error::Shape(format!(
            "gradient has {} entries, optimizer tracks {}",
            gradient.len(),
            state.len()
        )));
    }
    if let Some(k) = gradient.iter().position(|g| !g.is_finite()) {
        return Err(Error::invalid("gradient", format!("entry {k} is not finite")));
    }
    if !(lr.is_finite() && lr >= 0.0) {
        return Err(Error::invalid("learning rate", "must be finite and non-negative"));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    Ok(gradient
        .iter()
        .zip(state.first_moment.iter_mut().zip(state.second_moment.iter_mut()))
        .map(|(&g, (m, v))| {
            *m = state.beta1 * *m + (1.0 - state.beta1) * g;
            *v = state.beta2 * *v + (1.0 - state.beta2) * g * g;
            -lr * (*m / c1) / ((*v / c2).sqrt() + state.epsilon)
        })
        .collect())
}

/// `η(t) = η(1) γ^(t-1)` for iteration `t ≥ 1`.
pub fn lr_schedule(t: u64, initial: f64, decay: f64) -> f64 {
    initial * decay.powf(t.saturating_sub(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn schedule_values() {
        assert_eq!(lr_schedule(1, 1.0, 0.999), 1.0);
        assert_relative_eq!(lr_schedule(2, 1.0, 0.999), 0.999, epsilon = 1e-15);
        assert_relative_eq!(lr_schedule(1001, 1.0, 0.999), 0.3676954247709635, epsilon = 1e-12);
    }

    #[test]
    fn zero_gradient_gives_zero_update() {
        let mut s = AdamState::new(3);
        assert_eq!(adam_step(&mut s, &[0.0; 3], 1.0).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn first_step_is_signed_learning_rate() {
        let mut s = AdamState::new(3);
        let d = adam_step(&mut s, &[2.5, -1e-3, 40.0], 0.7).unwrap();
        assert_relative_eq!(d[0], -0.7, epsilon = 1e-7);
        assert_relative_eq!(d[1], 0.7, epsilon = 1e-4);
        assert_relative_eq!(d[2], -0.7, epsilon = 1e-8);
    }

    #[test]
    fn rejects_bad_input() {
        let mut s = AdamState::new(2);
        assert!(adam_step(&mut s, &[1.0], 1.0).is_err());
        assert!(adam_step(&mut s, &[1.0, f64::NAN], 1.0).is_err());
        assert_eq!(s.step, 0);
    }

    /// Scalar reference written directly from the bias-corrected recursion.
    fn reference_trajectory(steps: usize, lr: f64) -> Vec<f64> {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let (mut theta, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        let mut out = Vec::new();
        for t in 1..=steps {
            let g = 2.0 * theta;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t as i32));
            let vh = v / (1.0 - b2.powi(t as i32));
            theta -= lr * mh / (vh.sqrt() + eps);
            out.push(theta);
        }
        out
    }

    #[test]
    fn quadratic_bowl_matches_reference() {
        let reference = reference_trajectory(100, 0.1);
        let mut s = AdamState::new(1);
        let mut theta = 1.0;
        let mut path = Vec::new();
        for _ in 0..100 {
            theta += adam_step(&mut s, &[2.0 * theta], 0.1).unwrap()[0];
            path.push(theta);
        }
        for (a, b) in path.iter().zip(&reference) {
            assert!((a - b).abs() < 1e-12);
        }
        // Monotone approach during the initial descent.
        let first_crossing = path.iter().position(|&t| t <= 0.0).unwrap_or(path.len());
        assert!(first_crossing > 5);
        assert!(path[..first_crossing].windows(2).all(|w| w[1] < w[0]));
        assert!(path.last().unwrap().abs() < 0.1);
    }

    proptest! {
        /// `|Δθ| ≤ η (1 - β₁) / √(1 - β₂)` always, and `≤ η` for steady gradients.
        #[test]
        fn update_magnitude_is_bounded(grads in proptest::collection::vec(-100.0f64..100.0, 1..60), lr in 0.01f64..2.0) {
            let mut s = AdamState::new(1);
            let worst = lr * (1.0 - s.beta1) / (1.0 - s.beta2).sqrt();
            for g in &grads {
                let d = adam_step(&mut s, &[*g], lr).unwrap()[0];
                prop_assert!(d.abs() <= worst * (1.0 + 1e-9));
            }
            let mut s = AdamState::new(1);
            let g = grads[0];
            for _ in 0..grads.len() {
                let d = adam_step(&mut s, &[g], lr).unwrap()[0];
                prop_assert!(d.abs() <= lr * (1.0 + 1e-9));
            }
            prop_assert!(s.second_moment[0] >= 0.0);
        }
    }
}
