//! Desk-scale versions of the weight-resolution, pseudo-update and stability
//! measurements. Durations are given in hardware seconds and converted to
//! sample counts with [`SAMPLES_PER_SECOND`].

use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{apply_drift_params, pseudo_update, quantize_to_grid, HardwareModel, GRID_STEPS};
use crate::boltzmann::{dkl, RbmParams};
use crate::error::{Error, Result};
use crate::learner::{SampleRequest, SamplingBackend};
use crate::par::{self, Execution};
use crate::rng;

/// 2·10⁵ samples from three 0.1 s runs.
pub const SAMPLES_PER_SECOND: f64 = 2e5 / 0.3;

const CHUNK: usize = 1 << 16;

pub fn samples_for(seconds: f64) -> usize {
    (seconds * SAMPLES_PER_SECOND).round().max(1.0) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub dkl_mean: f64,
    pub dkl_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub label: String,
    pub points: Vec<CurvePoint>,
}

impl Curve {
    /// Value at the longest sampling time.
    pub fn final_value(&self) -> f64 {
        self.points.last().map_or(f64::NAN, |p| p.dkl_mean)
    }

    pub fn write_csv<W: Write>(&self, x_name: &str, out: W) -> Result<()> {
        write_points(&self.points, x_name, out)
    }
}

fn write_points<W: Write>(points: &[CurvePoint], x_name: &str, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([x_name, "dkl_mean", "dkl_std"])?;
    for p in points {
        w.write_record([p.x.to_string(), p.dkl_mean.to_string(), p.dkl_std.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Roughly `count` log-spaced sample counts from `total / 1000` up to `total`.
pub fn log_checkpoints(total: usize, count: usize) -> Vec<usize> {
    let lo = (total as f64 / 1000.0).max(1.0);
    let steps = count.max(2) - 1;
    let ratio = (total as f64 / lo).powf(1.0 / steps as f64);
    let mut out: Vec<usize> = (0..=steps)
        .map(|k| ((lo * ratio.powi(k as i32)).round() as usize).clamp(1, total))
        .collect();
    out.dedup();
    *out.last_mut().expect("at least one checkpoint") = total;
    out
}

/// Visible histograms (raw counts) after each checkpoint's number of samples.
///
/// Samples are drawn in chunks of single-run requests so that the rows stay in
/// time order and memory stays bounded.
fn sample_histograms<B: SamplingBackend>(
    backend: &mut B,
    params: &RbmParams,
    checkpoints: &[usize],
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let total = *checkpoints.last().ok_or(Error::Empty("checkpoints"))?;
    let mut counts = vec![0.0; 1usize << params.n_visible()];
    let mut snapshots = Vec::with_capacity(checkpoints.len());
    let mut next = checkpoints.iter().peekable();
    let (mut drawn, mut chunk) = (0usize, 0u64);
    while drawn < total {
        let request = SampleRequest {
            n_samples: CHUNK.min(total - drawn),
            runs: 1,
            seed: rng::mix(&[seed, chunk]),
        };
        let samples = backend.sample(params, &request)?;
        if samples.weights().is_some() {
            return Err(Error::Backend("experiments need a sampling backend, not enumeration".into()));
        }
        for k in 0..samples.len() {
            counts[samples.visible_index(k)] += 1.0;
            drawn += 1;
            while next.peek().is_some_and(|&&c| c == drawn) {
                snapshots.push(counts.clone());
                next.next();
            }
        }
        chunk += 1;
    }
    Ok(snapshots)
}

fn random_params(n: usize, nh: usize, range: i32, seed: u64) -> DMatrix<i32> {
    let mut rng = rng::stream(seed, 0x77);
    DMatrix::from_fn(n, nh, |_, _| rng.random_range(-range..=range))
}

/// Integer weights with biases at the activation midpoints.
fn midpoint_params(weights: &DMatrix<i32>) -> RbmParams {
    RbmParams {
        weights: weights.map(f64::from),
        visible_bias: vec![0.0; weights.nrows()],
        hidden_bias: vec![0.0; weights.ncols()],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResolutionOptions {
    pub n_visible: usize,
    pub n_hidden: usize,
    pub steps: Vec<i32>,
    pub repetitions: usize,
    /// Sampling time per distribution, seconds.
    pub duration: f64,
    pub weight_range: i32,
    #[serde(skip)]
    pub seed: u64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for ResolutionOptions {
    fn default() -> Self {
        Self {
            n_visible: 8,
            n_hidden: 20,
            steps: GRID_STEPS.to_vec(),
            repetitions: 10,
            duration: 0.1,
            weight_range: 63,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolutionRow {
    pub step: i32,
    pub dkl_mean: f64,
    pub dkl_std: f64,
}

pub fn write_resolution_csv<W: Write>(rows: &[ResolutionRow], out: W) -> Result<()> {
    let points: Vec<CurvePoint> = rows
        .iter()
        .map(|r| CurvePoint {
            x: f64::from(r.step),
            dkl_mean: r.dkl_mean,
            dkl_std: r.dkl_std,
        })
        .collect();
    write_points(&points, "dw", out)
}

/// `D_KL(p_full ‖ p_Δw)` for random uniform weights, per grid step.
///
/// Each repetition draws new weights; `p_full` and every `p_Δw` come from
/// separate sampler instances, so the `Δw = 1` row measures the noise floor.
pub fn run_resolution_experiment<B, F>(make_backend: F, options: &ResolutionOptions) -> Result<Vec<ResolutionRow>>
where
    B: SamplingBackend,
    F: Fn() -> Result<B> + Sync,
{
    if options.repetitions == 0 || options.steps.is_empty() {
        return Err(Error::invalid("resolution options", "need at least one repetition and one step"));
    }
    for &dw in &options.steps {
        super::weight_grid(dw)?;
    }
    let n_samples = samples_for(options.duration);
    let per_rep = options.steps.len() + 1;
    let jobs = options.repetitions * per_rep;
    let histograms = par::try_map_indexed(options.execution, jobs, |job| {
        let (rep, slot) = (job / per_rep, job % per_rep);
        let full = random_params(options.n_visible, options.n_hidden, options.weight_range, rng::mix(&[options.seed, rep as u64]));
        let weights = if slot == 0 {
            full
        } else {
            quantize_to_grid(&full, options.steps[slot - 1])?
        };
        let mut backend = make_backend()?;
        let seed = rng::mix(&[options.seed, rep as u64, slot as u64, 0x7265]);
        let mut h = sample_histograms(&mut backend, &midpoint_params(&weights), &[n_samples], seed)?;
        Ok::<_, Error>(h.pop().expect("one checkpoint"))
    })?;
    let mut rows = Vec::with_capacity(options.steps.len());
    for (s, &dw) in options.steps.iter().enumerate() {
        let values = (0..options.repetitions)
            .map(|rep| dkl(&histograms[rep * per_rep], &histograms[rep * per_rep + s + 1]))
            .collect::<Result<Vec<_>>>()?;
        let (dkl_mean, dkl_std) = mean_std(&values);
        rows.push(ResolutionRow { step: dw, dkl_mean, dkl_std });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PseudoUpdateOptions {
    pub n_visible: usize,
    pub n_hidden: usize,
    pub flip_fractions: Vec<f64>,
    pub repetitions: usize,
    /// Length `T` of the reference and perturbed runs, seconds.
    pub duration: f64,
    pub checkpoints: usize,
    pub weight_range: i32,
    #[serde(skip)]
    pub seed: u64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for PseudoUpdateOptions {
    fn default() -> Self {
        Self {
            n_visible: 8,
            n_hidden: 20,
            flip_fractions: vec![0.025, 0.1],
            repetitions: 5,
            duration: 10.0,
            checkpoints: 20,
            weight_range: 62,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoUpdateResult {
    /// One curve per flip fraction, `x` in seconds.
    pub curves: Vec<Curve>,
}

/// `D_KL(p̃^(t) ‖ p^(T))` between a pseudo-updated configuration sampled for
/// time `t` and the unperturbed reference sampled for `T`.
pub fn run_pseudo_update_experiment<B, F>(make_backend: F, options: &PseudoUpdateOptions) -> Result<PseudoUpdateResult>
where
    B: SamplingBackend,
    F: Fn() -> Result<B> + Sync,
{
    if options.repetitions == 0 || options.flip_fractions.is_empty() {
        return Err(Error::invalid("pseudo-update options", "need at least one repetition and one flip fraction"));
    }
    for &p in &options.flip_fractions {
        super::check_fraction(p)?;
    }
    let total = samples_for(options.duration);
    let checkpoints = log_checkpoints(total, options.checkpoints);
    let per_rep = options.flip_fractions.len() + 1;
    let jobs = options.repetitions * per_rep;
    let histograms = par::try_map_indexed(options.execution, jobs, |job| {
        let (rep, slot) = (job / per_rep, job % per_rep);
        let rep_seed = rng::mix(&[options.seed, rep as u64]);
        let reference = random_params(options.n_visible, options.n_hidden, options.weight_range, rep_seed);
        let weights = if slot == 0 {
            reference
        } else {
            pseudo_update(&reference, options.flip_fractions[slot - 1], rng::mix(&[rep_seed, slot as u64]))?
        };
        let mut backend = make_backend()?;
        let seed = rng::mix(&[rep_seed, slot as u64, 0x7073]);
        if slot == 0 {
            sample_histograms(&mut backend, &midpoint_params(&weights), &[total], seed)
        } else {
            sample_histograms(&mut backend, &midpoint_params(&weights), &checkpoints, seed)
        }
    })?;
    let mut curves = Vec::with_capacity(options.flip_fractions.len());
    for (f, &p) in options.flip_fractions.iter().enumerate() {
        let mut points = Vec::with_capacity(checkpoints.len());
        for (c, &count) in checkpoints.iter().enumerate() {
            let values = (0..options.repetitions)
                .map(|rep| dkl(&histograms[rep * per_rep + f + 1][c], &histograms[rep * per_rep][0]))
                .collect::<Result<Vec<_>>>()?;
            let (dkl_mean, dkl_std) = mean_std(&values);
            points.push(CurvePoint {
                x: count as f64 / SAMPLES_PER_SECOND,
                dkl_mean,
                dkl_std,
            });
        }
        curves.push(Curve {
            label: format!("p_flip={p}"),
            points,
        });
    }
    Ok(PseudoUpdateResult { curves })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityOptions {
    pub n_visible: usize,
    pub n_hidden: usize,
    pub repeats: usize,
    /// Length `T` of every run, seconds.
    pub duration: f64,
    pub checkpoints: usize,
    pub weight_range: i32,
    #[serde(skip)]
    pub model: HardwareModel,
    #[serde(skip)]
    pub seed: u64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        Self {
            n_visible: 8,
            n_hidden: 20,
            repeats: 30,
            duration: 10.0,
            checkpoints: 20,
            weight_range: 62,
            model: HardwareModel::default(),
            seed: 0,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityResult {
    /// `D_KL(p̃^(t) ‖ p^(T))` within each run.
    pub single_run: Curve,
    /// `D_KL(p^(t) ‖ ⟨p^(T)⟩_n)` against the average over all runs.
    pub run_average: Curve,
}

/// Repeats one static configuration `repeats` times, with per-run drift from
/// `options.model`.
pub fn run_stability_experiment<B, F>(make_backend: F, options: &StabilityOptions) -> Result<StabilityResult>
where
    B: SamplingBackend,
    F: Fn() -> Result<B> + Sync,
{
    options.model.validate()?;
    if options.repeats < 2 {
        return Err(Error::invalid("repeats", "the run average needs at least two runs"));
    }
    let total = samples_for(options.duration);
    let checkpoints = log_checkpoints(total, options.checkpoints);
    let weights = random_params(options.n_visible, options.n_hidden, options.weight_range, options.seed);
    let programmed = midpoint_params(&weights);
    let runs = par::try_map_indexed(options.execution, options.repeats, |r| {
        let mut backend = make_backend()?;
        let params = apply_drift_params(&programmed, backend.scale(), &options.model, r as u64);
        sample_histograms(&mut backend, &params, &checkpoints, rng::mix(&[options.seed, r as u64, 0x7374]))
    })?;
    let last = checkpoints.len() - 1;
    let dim = runs[0][last].len();
    let mut average = vec![0.0; dim];
    for run in &runs {
        let norm: f64 = run[last].iter().sum();
        for (a, c) in average.iter_mut().zip(&run[last]) {
            *a += c / norm;
        }
    }
    let curve = |label: &str, targets: Vec<&[f64]>| -> Result<Curve> {
        let mut points = Vec::with_capacity(checkpoints.len());
        for (c, &count) in checkpoints.iter().enumerate() {
            let values = (0..runs.len())
                .map(|r| dkl(&runs[r][c], targets[r]))
                .collect::<Result<Vec<_>>>()?;
            let (dkl_mean, dkl_std) = mean_std(&values);
            points.push(CurvePoint {
                x: count as f64 / SAMPLES_PER_SECOND,
                dkl_mean,
                dkl_std,
            });
        }
        Ok(Curve {
            label: label.to_string(),
            points,
        })
    };
    Ok(StabilityResult {
        single_run: curve("single-run", runs.iter().map(|run| run[last].as_slice()).collect())?,
        run_average: curve("run-average", vec![average.as_slice(); runs.len()])?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoints_end_at_total() {
        let c = log_checkpoints(1_000_000, 10);
        assert_eq!(c.first(), Some(&1000));
        assert_eq!(c.last(), Some(&1_000_000));
        assert!(c.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(log_checkpoints(5, 10).last(), Some(&5));
    }

    #[test]
    fn mean_and_sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }
}
