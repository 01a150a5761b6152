//! Bipartite Boltzmann machines: exact marginals, block-Gibbs sampling and
//! Kullback-Leibler divergence on visible-state distributions.

use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{ensure_finite, Error, Result};
use crate::par::{self, Execution};
use crate::rng;

/// Largest visible layer that is enumerated exactly.
pub const MAX_EXACT_VISIBLE: usize = 20;

/// Probability substituted for empty histogram bins before taking ratios.
pub const ZERO_REPLACEMENT: f64 = 1e-6;

/// Abstract Boltzmann parameters `θ = (W, b_v, b_h)`.
///
/// The energy of a joint state is `ε(v, h) = -vᵀ W h - b_v·v - b_h·h`.
#[derive(Debug, Clone, PartialEq)]
pub struct RbmParams {
    /// `N × N_h` visible-hidden couplings.
    pub weights: DMatrix<f64>,
    pub visible_bias: Vec<f64>,
    pub hidden_bias: Vec<f64>,
}

impl RbmParams {
    pub fn new(weights: DMatrix<f64>, visible_bias: Vec<f64>, hidden_bias: Vec<f64>) -> Result<Self> {
        let p = Self {
            weights,
            visible_bias,
            hidden_bias,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn zeros(n_visible: usize, n_hidden: usize) -> Self {
        Self {
            weights: DMatrix::zeros(n_visible, n_hidden),
            visible_bias: vec![0.0; n_visible],
            hidden_bias: vec![0.0; n_hidden],
        }
    }

    pub fn n_visible(&self) -> usize {
        self.visible_bias.len()
    }

    pub fn n_hidden(&self) -> usize {
        self.hidden_bias.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.nrows() != self.visible_bias.len()
            || self.weights.ncols() != self.hidden_bias.len()
        {
            return Err(Error::Shape(format!(
                "weights are {}x{} but biases have lengths {} and {}",
                self.weights.nrows(),
                self.weights.ncols(),
                self.visible_bias.len(),
                self.hidden_bias.len()
            )));
        }
        for &w in self.weights.iter() {
            ensure_finite("weights", w)?;
        }
        for &b in self.visible_bias.iter().chain(&self.hidden_bias) {
            ensure_finite("bias", b)?;
        }
        Ok(())
    }

    /// Network energy of a joint state.
    pub fn energy(&self, v: &[u8], h: &[u8]) -> f64 {
        let mut e = 0.0;
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0 {
                continue;
            }
            e -= self.visible_bias[i];
            for (j, &hj) in h.iter().enumerate() {
                if hj != 0 {
                    e -= self.weights[(i, j)];
                }
            }
        }
        for (j, &hj) in h.iter().enumerate() {
            if hj != 0 {
                e -= self.hidden_bias[j];
            }
        }
        e
    }

    /// Input to hidden unit `j` given a visible configuration.
    pub fn hidden_input(&self, v: &[u8], j: usize) -> f64 {
        self.hidden_bias[j]
            + v.iter()
                .enumerate()
                .filter(|(_, &vi)| vi != 0)
                .map(|(i, _)| self.weights[(i, j)])
                .sum::<f64>()
    }

    /// Unnormalized log marginal `log Σ_h exp(-ε(v, h))`.
    pub fn log_marginal_weight(&self, v: &[u8]) -> f64 {
        let visible: f64 = v
            .iter()
            .zip(&self.visible_bias)
            .filter(|(&vi, _)| vi != 0)
            .map(|(_, b)| b)
            .sum();
        visible
            + (0..self.n_hidden())
                .map(|j| softplus(self.hidden_input(v, j)))
                .sum::<f64>()
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Decodes a visible index into `{0,1}` entries (bit `i` is `v_i`).
pub fn bits(index: usize, n: usize) -> Vec<u8> {
    (0..n).map(|i| ((index >> i) & 1) as u8).collect()
}

/// Exact probability vector over all `2^N` visible configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactDistribution {
    pub probabilities: Vec<f64>,
    /// Natural log of the partition sum `Z_θ`.
    pub log_partition: f64,
}

impl ExactDistribution {
    pub fn partition_sum(&self) -> f64 {
        self.log_partition.exp()
    }

    pub fn n_visible(&self) -> usize {
        self.probabilities.len().trailing_zeros() as usize
    }
}

/// Marginal `p(v) ∝ exp(b_v·v) Π_j (1 + exp(b_h,j + Σ_i W_ij v_i))` by enumeration.
pub fn exact_marginal(params: &RbmParams) -> Result<ExactDistribution> {
    params.validate()?;
    let n = params.n_visible();
    if n > MAX_EXACT_VISIBLE {
        return Err(Error::Capacity {
            what: "visible units for exact enumeration",
            value: n,
            limit: MAX_EXACT_VISIBLE,
        });
    }
    let logw: Vec<f64> = (0..1usize << n)
        .map(|idx| params.log_marginal_weight(&bits(idx, n)))
        .collect();
    let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut probabilities: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = probabilities.iter().sum();
    probabilities.iter_mut().for_each(|p| *p /= sum);
    Ok(ExactDistribution {
        probabilities,
        log_partition: max + sum.ln(),
    })
}

/// Largest joint layer (`N + N_h`) that is enumerated exactly.
pub const MAX_EXACT_UNITS: usize = 20;

/// Exact joint probabilities `p(v, h)` indexed by `v | h << N`.
pub fn exact_joint(params: &RbmParams) -> Result<Vec<f64>> {
    params.validate()?;
    let (n, nh) = (params.n_visible(), params.n_hidden());
    if n + nh > MAX_EXACT_UNITS {
        return Err(Error::Capacity {
            what: "units for exact joint enumeration",
            value: n + nh,
            limit: MAX_EXACT_UNITS,
        });
    }
    let neg_energy: Vec<f64> = (0..1usize << (n + nh))
        .map(|z| -params.energy(&bits(z & ((1 << n) - 1), n), &bits(z >> n, nh)))
        .collect();
    let max = neg_energy.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = neg_energy.iter().map(|e| (e - max).exp()).collect();
    let sum: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= sum);
    Ok(p)
}

/// Histogram over visible configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    n_visible: usize,
    counts: Vec<f64>,
    total: f64,
}

impl EmpiricalDistribution {
    pub fn new(n_visible: usize) -> Result<Self> {
        if n_visible > MAX_EXACT_VISIBLE {
            return Err(Error::Capacity {
                what: "visible units for a dense histogram",
                value: n_visible,
                limit: MAX_EXACT_VISIBLE,
            });
        }
        Ok(Self {
            n_visible,
            counts: vec![0.0; 1 << n_visible],
            total: 0.0,
        })
    }

    pub fn add(&mut self, index: usize, weight: f64) {
        self.counts[index] += weight;
        self.total += weight;
    }

    pub fn merge(&mut self, other: &EmpiricalDistribution) {
        debug_assert_eq!(self.n_visible, other.n_visible);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
    }

    pub fn n_visible(&self) -> usize {
        self.n_visible
    }

    pub fn count(&self, index: usize) -> f64 {
        self.counts[index]
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    /// Normalized probabilities (all zero for an empty histogram).
    pub fn probabilities(&self) -> Vec<f64> {
        if self.total <= 0.0 {
            return vec![0.0; self.counts.len()];
        }
        self.counts.iter().map(|c| c / self.total).collect()
    }
}

/// Writes `state,probability` rows; the bitstring lists `v_0` first.
pub fn write_distribution_csv<W: Write>(probabilities: &[f64], out: W) -> Result<()> {
    let n = probabilities.len().trailing_zeros() as usize;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["state", "probability"])?;
    for (idx, p) in probabilities.iter().enumerate() {
        let state: String = (0..n)
            .map(|i| if (idx >> i) & 1 == 1 { '1' } else { '0' })
            .collect();
        w.write_record([state, format!("{p:e}")])?;
    }
    w.flush()?;
    Ok(())
}

/// Kullback-Leibler divergence `Σ_v p(v) log(p(v)/q(v))`.
///
/// Both inputs are normalized first. Entries of `q` that are zero where `p` is
/// positive are replaced by [`ZERO_REPLACEMENT`] and `q` is renormalized.
pub fn dkl(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Shape(format!(
            "distributions over {} and {} states",
            p.len(),
            q.len()
        )));
    }
    if p.iter().chain(q).any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::invalid("distribution", "probabilities must be finite and non-negative"));
    }
    let p_sum: f64 = p.iter().sum();
    if p_sum <= 0.0 || q.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Empty("distribution with zero total mass"));
    }
    let q_smoothed: Vec<f64> = p
        .iter()
        .zip(q)
        .map(|(&pv, &qv)| if pv > 0.0 && qv == 0.0 { ZERO_REPLACEMENT } else { qv })
        .collect();
    let q_sum: f64 = q_smoothed.iter().sum();
    let d = p
        .iter()
        .zip(&q_smoothed)
        .filter(|(&pv, _)| pv > 0.0)
        .map(|(&pv, &qv)| {
            let pn = pv / p_sum;
            pn * (pn / (qv / q_sum)).ln()
        })
        .sum::<f64>();
    // Rounding can leave tiny negative values for identical inputs.
    Ok(d.max(0.0))
}

/// Options for the block-Gibbs reference sampler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GibbsOptions {
    pub burn_in: usize,
    pub thinning: usize,
    /// Independent chains; samples are split evenly between them.
    pub chains: usize,
    pub execution: Execution,
}

impl Default for GibbsOptions {
    fn default() -> Self {
        Self {
            burn_in: 1000,
            thinning: 1,
            chains: 1,
            execution: Execution::Parallel,
        }
    }
}

/// A single block-Gibbs chain alternating `h | v` and `v | h`.
#[derive(Debug, Clone)]
pub struct GibbsChain {
    n_visible: usize,
    n_hidden: usize,
    /// Row-major `N × N_h` copy of the couplings.
    weights: Vec<f64>,
    visible_bias: Vec<f64>,
    hidden_bias: Vec<f64>,
    v: Vec<u8>,
    h: Vec<u8>,
    rng: rng::Rng,
}

impl GibbsChain {
    /// Starts from a uniformly random visible state.
    pub fn new(params: &RbmParams, mut rng: rng::Rng) -> Self {
        let v = (0..params.n_visible()).map(|_| rng.random_range(0..2u8)).collect();
        let mut chain = Self {
            n_visible: params.n_visible(),
            n_hidden: params.n_hidden(),
            weights: Vec::new(),
            visible_bias: Vec::new(),
            hidden_bias: Vec::new(),
            v,
            h: vec![0; params.n_hidden()],
            rng,
        };
        chain.set_params(params);
        chain
    }

    /// Replaces the parameters, keeping the current state (warm start).
    pub fn set_params(&mut self, params: &RbmParams) {
        assert_eq!(params.n_visible(), self.n_visible);
        assert_eq!(params.n_hidden(), self.n_hidden);
        self.weights.clear();
        for i in 0..self.n_visible {
            for j in 0..self.n_hidden {
                self.weights.push(params.weights[(i, j)]);
            }
        }
        self.visible_bias.clone_from(&params.visible_bias);
        self.hidden_bias.clone_from(&params.hidden_bias);
    }

    pub fn visible(&self) -> &[u8] {
        &self.v
    }

    pub fn hidden(&self) -> &[u8] {
        &self.h
    }

    pub fn sweep(&mut self) {
        let nh = self.n_hidden;
        let mut input = self.hidden_bias.clone();
        for (i, &vi) in self.v.iter().enumerate() {
            if vi != 0 {
                for (x, w) in input.iter_mut().zip(&self.weights[i * nh..(i + 1) * nh]) {
                    *x += w;
                }
            }
        }
        for (hj, x) in self.h.iter_mut().zip(&input) {
            *hj = u8::from(self.rng.random::<f64>() < sigmoid(*x));
        }
        for i in 0..self.n_visible {
            let row = &self.weights[i * nh..(i + 1) * nh];
            let x = self.visible_bias[i]
                + row
                    .iter()
                    .zip(&self.h)
                    .filter(|(_, &hj)| hj != 0)
                    .map(|(w, _)| w)
                    .sum::<f64>();
            self.v[i] = u8::from(self.rng.random::<f64>() < sigmoid(x));
        }
    }

    /// Index of the current visible configuration.
    pub fn visible_index(&self) -> usize {
        crate::states::visible_index(&self.v)
    }
}

/// Block-Gibbs visible histogram from a single chain.
pub fn gibbs_sample(
    params: &RbmParams,
    n_samples: usize,
    burn_in: usize,
    thinning: usize,
    seed: u64,
) -> Result<EmpiricalDistribution> {
    gibbs_sample_with(
        params,
        n_samples,
        &GibbsOptions {
            burn_in,
            thinning,
            chains: 1,
            execution: Execution::Sequential,
        },
        seed,
    )
}

/// Block-Gibbs visible histogram from one or more independent chains.
///
/// Chain `c` draws from stream `c` of `seed`; histograms are merged in chain
/// order so the result does not depend on the execution policy.
pub fn gibbs_sample_with(
    params: &RbmParams,
    n_samples: usize,
    options: &GibbsOptions,
    seed: u64,
) -> Result<EmpiricalDistribution> {
    params.validate()?;
    if n_samples == 0 {
        return Err(Error::invalid("n_samples", "must be positive"));
    }
    if options.thinning == 0 || options.chains == 0 {
        return Err(Error::invalid("gibbs options", "thinning and chains must be positive"));
    }
    let chains = options.chains.min(n_samples);
    let per_chain = split_evenly(n_samples, chains);
    let histograms = par::try_map_indexed(options.execution, chains, |c| {
        let mut chain = GibbsChain::new(params, rng::stream(seed, c as u64));
        let mut hist = EmpiricalDistribution::new(params.n_visible())?;
        for _ in 0..options.burn_in {
            chain.sweep();
        }
        for _ in 0..per_chain[c] {
            for _ in 0..options.thinning {
                chain.sweep();
            }
            hist.add(chain.visible_index(), 1.0);
        }
        Ok::<_, Error>(hist)
    })?;
    let mut total = EmpiricalDistribution::new(params.n_visible())?;
    for h in &histograms {
        total.merge(h);
    }
    Ok(total)
}

/// Splits `n` items into `parts` near-equal chunks (earlier chunks take the remainder).
pub(crate) fn split_evenly(n: usize, parts: usize) -> Vec<usize> {
    let base = n / parts;
    let rem = n % parts;
    (0..parts).map(|k| base + usize::from(k < rem)).collect()
}
