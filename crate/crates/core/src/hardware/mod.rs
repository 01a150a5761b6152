//! Hardware parameter constraints: 6-bit signed weights, coarse weight grids,
//! per-run analog drift and pseudo weight updates.

pub mod experiments;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::boltzmann::RbmParams;
use crate::error::{ensure_finite, Error, Result};
use crate::learner::Scale;
use crate::rng;
use crate::snn::calibrate::CalibrationMap;
use crate::snn::network::{NetworkConfig, MAX_WEIGHT};

pub use experiments::{
    run_pseudo_update_experiment, run_resolution_experiment, run_stability_experiment, Curve, CurvePoint,
    PseudoUpdateOptions, PseudoUpdateResult, ResolutionOptions, ResolutionRow, StabilityOptions, StabilityResult,
    SAMPLES_PER_SECOND,
};

/// Grid steps for which the grid rule is defined.
pub const GRID_STEPS: [i32; 7] = [1, 2, 4, 8, 16, 32, 64];

/// Default per-run drift in abstract units.
pub const DEFAULT_DRIFT_SIGMA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftMode {
    /// Independent perturbation per run.
    #[default]
    White,
    /// Perturbations accumulate from run to run.
    RandomWalk,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HardwareModel {
    pub weight_clip: i32,
    pub grid_step: i32,
    /// Weight drift per run, abstract units.
    pub drift_sigma: f64,
    /// Bias drift per run, abstract units.
    pub bias_jitter: f64,
    pub drift_mode: DriftMode,
    pub pseudo_flip_fraction: f64,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for HardwareModel {
    fn default() -> Self {
        Self {
            weight_clip: MAX_WEIGHT,
            grid_step: 1,
            drift_sigma: DEFAULT_DRIFT_SIGMA,
            bias_jitter: DEFAULT_DRIFT_SIGMA,
            drift_mode: DriftMode::White,
            pseudo_flip_fraction: 0.1,
            seed: 0,
        }
    }
}

impl HardwareModel {
    /// A model without drift.
    pub fn stable() -> Self {
        Self {
            drift_sigma: 0.0,
            bias_jitter: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_WEIGHT).contains(&self.weight_clip) {
            return Err(Error::invalid("weight_clip", format!("must lie in 1..={MAX_WEIGHT}")));
        }
        weight_grid(self.grid_step)?;
        for (name, v) in [("drift_sigma", self.drift_sigma), ("bias_jitter", self.bias_jitter)] {
            ensure_finite(name, v)?;
            if v < 0.0 {
                return Err(Error::invalid(name, "must be non-negative"));
            }
        }
        check_fraction(self.pseudo_flip_fraction)
    }
}

fn check_fraction(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::invalid("pseudo_flip_fraction", format!("must lie in [0, 1], got {p}")))
    }
}

/// Allowed weights for grid step `dw`: multiples of `dw` up to ±64, with ±64 moved to ±63.
pub fn weight_grid(dw: i32) -> Result<Vec<i32>> {
    if !GRID_STEPS.contains(&dw) {
        return Err(Error::invalid("grid_step", format!("must be one of {GRID_STEPS:?}, got {dw}")));
    }
    let edge = MAX_WEIGHT + 1;
    let mut grid: Vec<i32> = (-edge / dw..=edge / dw)
        .map(|k| (k * dw).clamp(-MAX_WEIGHT, MAX_WEIGHT))
        .collect();
    grid.dedup();
    Ok(grid)
}

/// Rounds every weight (after clipping to ±63) to the nearest grid point; ties go toward zero.
pub fn quantize_to_grid(weights: &DMatrix<i32>, dw: i32) -> Result<DMatrix<i32>> {
    let grid = weight_grid(dw)?;
    Ok(weights.map(|w| nearest_on_grid(&grid, w.clamp(-MAX_WEIGHT, MAX_WEIGHT))))
}

fn nearest_on_grid(grid: &[i32], w: i32) -> i32 {
    *grid
        .iter()
        .min_by_key(|&&g| ((g - w).abs(), g.abs()))
        .expect("grid is never empty")
}

/// Changes exactly `round(p_flip · n)` uniformly chosen entries by ±1.
///
/// Entries sitting at the clip boundary step inward so that every chosen entry changes.
pub fn pseudo_update(weights: &DMatrix<i32>, p_flip: f64, seed: u64) -> Result<DMatrix<i32>> {
    check_fraction(p_flip)?;
    let n = weights.len();
    let count = (p_flip * n as f64).round() as usize;
    let mut rng = rng::stream(seed, 0x666c6970);
    let mut out = weights.map(|w| w.clamp(-MAX_WEIGHT, MAX_WEIGHT));
    for k in index::sample(&mut rng, n, count) {
        let up: bool = rng.random();
        let w = out[k];
        out[k] = if w >= MAX_WEIGHT || (!up && w > -MAX_WEIGHT) { w - 1 } else { w + 1 };
    }
    Ok(out)
}

/// Standard normal draws for `len` parameters, fixed by `(seed, run, tag)`.
fn normals(seed: u64, run: u64, tag: u64, len: usize) -> Vec<f64> {
    let mut rng = rng::stream(seed, rng::mix(&[run, tag]));
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

/// Perturbation of `len` parameters in run `run_index`, in units of σ.
fn drift_noise(model: &HardwareModel, run_index: u64, tag: u64, len: usize) -> Vec<f64> {
    match model.drift_mode {
        DriftMode::White => normals(model.seed, run_index, tag, len),
        DriftMode::RandomWalk => {
            let mut acc = vec![0.0; len];
            for r in 0..=run_index {
                for (a, x) in acc.iter_mut().zip(normals(model.seed, r, tag, len)) {
                    *a += x;
                }
            }
            acc
        }
    }
}

const WEIGHT_TAG: u64 = 0x7765;
const BIAS_TAG: u64 = 0x6269;

/// Effective parameters (hardware units) for run `run_index`.
pub fn apply_drift_params(params: &RbmParams, scale: Scale, model: &HardwareModel, run_index: u64) -> RbmParams {
    let (n, nh) = (params.n_visible(), params.n_hidden());
    let mut out = params.clone();
    if model.drift_sigma > 0.0 {
        let xi = drift_noise(model, run_index, WEIGHT_TAG, n * nh);
        for i in 0..n {
            for j in 0..nh {
                out.weights[(i, j)] += model.drift_sigma * xi[i * nh + j] / scale.weight;
            }
        }
    }
    if model.bias_jitter > 0.0 {
        let xi = drift_noise(model, run_index, BIAS_TAG, n + nh);
        let (vis, hid) = xi.split_at(n);
        for (b, x) in out.visible_bias.iter_mut().zip(vis) {
            *b += model.bias_jitter * x / scale.bias;
        }
        for (b, x) in out.hidden_bias.iter_mut().zip(hid) {
            *b += model.bias_jitter * x / scale.bias;
        }
    }
    out
}

/// Effective network for run `run_index`: weight offsets and leak shifts that
/// realize the abstract-unit drift under `calibration`.
pub fn apply_drift(
    config: &NetworkConfig,
    calibration: &CalibrationMap,
    model: &HardwareModel,
    run_index: u64,
) -> Result<NetworkConfig> {
    config.validate()?;
    model.validate()?;
    let (n, nh) = (config.n_visible, config.n_hidden);
    let size = n + nh;
    if calibration.n_neurons() != size {
        return Err(Error::Shape("calibration does not cover the network".into()));
    }
    let mut out = config.clone();
    if model.drift_sigma > 0.0 {
        if out.weight_offsets.is_empty() {
            out.weight_offsets = vec![vec![0.0; size]; size];
        }
        let xi = drift_noise(model, run_index, WEIGHT_TAG, n * nh);
        for i in 0..n {
            for j in 0..nh {
                let h = n + j;
                let delta = model.drift_sigma * xi[i * nh + j] / calibration.pair_factor(i, h);
                out.weight_offsets[i][h] += delta;
                out.weight_offsets[h][i] += delta;
            }
        }
    }
    if model.bias_jitter > 0.0 {
        let xi = drift_noise(model, run_index, BIAS_TAG, size);
        for (k, x) in xi.iter().enumerate() {
            out.biases[k] += model.bias_jitter * x * calibration.fits[k].alpha;
        }
    }
    Ok(out)
}
