//! Current-based LIF membrane with an exponential synaptic kernel.
//!
//! Between input events the synaptic current decays as `I(s) = I₀ e^{-s/τ_syn}`
//! and the membrane follows
//!
//! ```text
//! u(s) = V_l + K e^{-s/τ_syn} + (u₀ - V_l - K) e^{-s/τ_m},   K = (I₀/g_l) τ_syn / (τ_syn - τ_m)
//! ```
//!
//! so spike times are roots of a constant plus two exponentials, found exactly
//! up to floating-point tolerance.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NeuronParams {
    pub membrane_capacitance: f64,
    pub leak_conductance: f64,
    pub leak_potential: f64,
    pub threshold: f64,
    pub reset: f64,
    pub refractory_time: f64,
    pub synaptic_time: f64,
}

impl Default for NeuronParams {
    /// High-conductance neuron: `τ_m = 0.1`, `τ_syn = 1`, `τ_ref = 2`.
    fn default() -> Self {
        Self {
            membrane_capacitance: 0.2,
            leak_conductance: 2.0,
            leak_potential: -50.0,
            threshold: -50.0,
            reset: -53.0,
            refractory_time: 2.0,
            synaptic_time: 1.0,
        }
    }
}

impl NeuronParams {
    pub fn tau_m(&self) -> f64 {
        self.membrane_capacitance / self.leak_conductance
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("membrane_capacitance", self.membrane_capacitance),
            ("leak_conductance", self.leak_conductance),
            ("leak_potential", self.leak_potential),
            ("threshold", self.threshold),
            ("reset", self.reset),
            ("refractory_time", self.refractory_time),
            ("synaptic_time", self.synaptic_time),
        ] {
            ensure_finite(name, v)?;
        }
        if self.membrane_capacitance <= 0.0 || self.leak_conductance <= 0.0 {
            return Err(Error::invalid("membrane", "capacitance and leak conductance must be positive"));
        }
        if self.reset >= self.threshold {
            return Err(Error::invalid("reset", "V_reset must lie below V_thresh"));
        }
        if self.refractory_time <= 0.0 {
            return Err(Error::invalid("refractory_time", "must be positive"));
        }
        if self.synaptic_time <= 0.0 {
            return Err(Error::invalid("synaptic_time", "must be positive"));
        }
        if (self.tau_m() - self.synaptic_time).abs() <= 1e-9 * self.synaptic_time {
            return Err(Error::invalid(
                "synaptic_time",
                "τ_syn must differ from τ_m for the closed-form membrane solution",
            ));
        }
        if self.tau_m() >= self.refractory_time {
            log::warn!(
                "τ_m = {} is not below τ_ref = {}; neuron is outside the high-conductance regime",
                self.tau_m(),
                self.refractory_time
            );
        }
        Ok(())
    }

    /// Noise-free inter-spike interval for a constant suprathreshold leak.
    pub fn free_isi(&self) -> Option<f64> {
        (self.leak_potential > self.threshold).then(|| {
            self.refractory_time
                + self.tau_m()
                    * ((self.leak_potential - self.reset) / (self.leak_potential - self.threshold)).ln()
        })
    }
}

/// Precomputed constants for one neuron's free dynamics.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Membrane {
    pub leak: f64,
    pub threshold: f64,
    pub reset: f64,
    pub tau_ref: f64,
    pub tau_m: f64,
    pub tau_syn: f64,
    /// `τ_syn / (g_l (τ_syn - τ_m))`, maps current to the `K` coefficient.
    current_gain: f64,
}

impl Membrane {
    pub fn new(p: &NeuronParams, leak: f64) -> Self {
        let tau_m = p.tau_m();
        Self {
            leak,
            threshold: p.threshold,
            reset: p.reset,
            tau_ref: p.refractory_time,
            tau_m,
            tau_syn: p.synaptic_time,
            current_gain: p.synaptic_time / (p.leak_conductance * (p.synaptic_time - tau_m)),
        }
    }

    /// Membrane and current after `s` of free evolution.
    #[inline]
    pub fn evolve(&self, u: f64, current: f64, s: f64) -> (f64, f64) {
        let es = (-s / self.tau_syn).exp();
        let em = (-s / self.tau_m).exp();
        let k = current * self.current_gain;
        (self.leak + k * es + (u - self.leak - k) * em, current * es)
    }

    /// First `s > 0` at which the freely evolving membrane reaches threshold.
    pub fn next_crossing(&self, u: f64, current: f64) -> Option<f64> {
        let c = self.leak - self.threshold;
        let k = current * self.current_gain;
        let d = u - self.leak - k;
        let f = |s: f64| c + k * (-s / self.tau_syn).exp() + d * (-s / self.tau_m).exp();
        if u >= self.threshold {
            return Some(0.0);
        }
        if c + k.max(0.0) + d.max(0.0) <= 0.0 {
            return None;
        }

        // f has at most one stationary point.
        let ratio = -(d * self.tau_syn) / (k * self.tau_m);
        let s_ext = if ratio > 0.0 && ratio.is_finite() {
            let s = ratio.ln() / (1.0 / self.tau_m - 1.0 / self.tau_syn);
            (s > 0.0).then_some(s)
        } else {
            None
        };

        let (lo, hi) = match s_ext {
            Some(se) if f(se) > 0.0 => (0.0, se),
            _ if c > 0.0 => {
                let lo = s_ext.unwrap_or(0.0);
                let mut hi = lo + self.tau_m.min(self.tau_syn);
                while f(hi) <= 0.0 {
                    hi = lo + 2.0 * (hi - lo);
                    if hi > 1e12 {
                        return None;
                    }
                }
                (lo, hi)
            }
            _ => return None,
        };
        let f_fp = |s: f64| {
            let ks = k * (-s / self.tau_syn).exp();
            let dm = d * (-s / self.tau_m).exp();
            (c + ks + dm, -ks / self.tau_syn - dm / self.tau_m)
        };
        Some(solve_monotone(f_fp, lo, hi))
    }
}

/// Bracketed Newton iteration for `f(lo) < 0 < f(hi)` with `f` monotone on the bracket.
fn solve_monotone(f_fp: impl Fn(f64) -> (f64, f64), mut lo: f64, mut hi: f64) -> f64 {
    let mut s = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (fs, dfs) = f_fp(s);
        if fs == 0.0 {
            return s;
        }
        if fs < 0.0 {
            lo = s;
        } else {
            hi = s;
        }
        let newton = s - fs / dfs;
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - s).abs() <= 1e-14 * s.abs().max(1e-300) || hi - lo <= 1e-15 * hi {
            return next;
        }
        s = next;
    }
    s
}
