//! Noisy label filter.
//!
//! Per-sample teacher losses are max-normalised and fitted with a
//! two-component 1-D Gaussian mixture. The posterior of the component
//! with the smaller mean is each sample's clean probability, and a
//! scheduled threshold on it splits the training set into clean and noisy
//! parts.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::losses;
use crate::model::NetworkParams;
use crate::seed;

/// Rows per forward pass when scoring the whole training set.
const SCORING_CHUNK: usize = 256;

/// Cross-entropy of the network's prediction for every sample against its
/// observed label, on un-augmented features.
pub fn per_sample_losses(teacher: &NetworkParams, dataset: &Dataset) -> Result<Vec<f64>> {
    if dataset.is_empty() {
        return Err(Error::invalid("cannot score an empty dataset"));
    }
    let features = dataset.features();
    let labels = dataset.observed_labels();
    let mut out = Vec::with_capacity(dataset.len());
    let all: Vec<usize> = (0..dataset.len()).collect();
    for chunk in all.chunks(SCORING_CHUNK) {
        let x = features.select_rows(chunk);
        let logits = teacher.forward(&x)?.logits;
        let ys: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
        out.extend(losses::per_sample_cross_entropy(&logits, &ys)?);
    }
    Ok(out)
}

/// Divide by the maximum; an all-zero input stays all zero.
pub fn max_normalize(losses: &[f64]) -> Result<Vec<f64>> {
    if losses.is_empty() {
        return Err(Error::invalid("cannot normalise an empty loss vector"));
    }
    if losses.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
        return Err(Error::invalid("losses must be finite and nonnegative"));
    }
    let max = losses.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Ok(alloc::vec![0.0; losses.len()]);
    }
    Ok(losses.iter().map(|l| l / max).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmParams {
    pub means: [f64; 2],
    pub variances: [f64; 2],
    pub weights: [f64; 2],
}

impl GmmParams {
    /// Index of the low-loss component: smaller mean, then smaller
    /// variance, then lower index.
    pub fn clean_component(&self) -> usize {
        let key = |k: usize| (self.means[k], self.variances[k]);
        let (m0, v0) = key(0);
        let (m1, v1) = key(1);
        if m1 < m0 || (m1 == m0 && v1 < v0) {
            1
        } else {
            0
        }
    }

    fn log_weighted_density(&self, k: usize, x: f64) -> f64 {
        let var = self.variances[k];
        let d = x - self.means[k];
        libm::log(self.weights[k]) - 0.5 * libm::log(2.0 * PI * var) - d * d / (2.0 * var)
    }

    /// Posterior of each component at `x`, and `log p(x)`.
    fn responsibilities(&self, x: f64) -> ([f64; 2], f64) {
        let a = self.log_weighted_density(0, x);
        let b = self.log_weighted_density(1, x);
        let max = a.max(b);
        let (ea, eb) = (libm::exp(a - max), libm::exp(b - max));
        let total = ea + eb;
        ([ea / total, eb / total], max + libm::log(total))
    }

    pub fn log_likelihood(&self, data: &[f64]) -> f64 {
        data.iter().map(|&x| self.responsibilities(x).1).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmConfig {
    /// Stop once the log-likelihood improves by less than this.
    pub tol: f64,
    pub max_iter: usize,
    pub variance_floor: f64,
    /// Standard deviation of Gaussian jitter added to the initial means.
    pub init_jitter: f64,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig { tol: 1e-6, max_iter: 100, variance_floor: 1e-6, init_jitter: 0.0, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmFit {
    pub params: GmmParams,
    /// Log-likelihood of the initial parameters followed by the value
    /// after every M-step.
    pub log_likelihoods: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Linear-interpolation percentile of sorted data, `q` in `[0, 1]`.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Two-component 1-D Gaussian mixture fitted by expectation maximisation.
///
/// Means start at the 10th and 90th percentiles, both variances at the
/// data variance and the weights at one half.
pub fn fit_gmm_em(data: &[f64], config: &EmConfig) -> Result<GmmFit> {
    if data.len() < 4 {
        return Err(Error::invalid("EM needs at least four samples"));
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("EM input must be finite"));
    }
    if !(config.variance_floor > 0.0) {
        return Err(Error::invalid("variance floor must be positive"));
    }
    let n = data.len() as f64;
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = data.iter().sum::<f64>() / n;
    let var = data.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let var = var.max(config.variance_floor);

    let mut means = [percentile(&sorted, 0.1), percentile(&sorted, 0.9)];
    if config.init_jitter > 0.0 {
        let mut rng = seed::stream(seed::derive(config.seed, seed::EM));
        for m in means.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *m += config.init_jitter * z;
        }
    }
    let mut params = GmmParams { means, variances: [var, var], weights: [0.5, 0.5] };

    let mut history = alloc::vec![params.log_likelihood(data)];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iter {
        iterations += 1;
        // E-step
        let mut mass = [0.0; 2];
        let mut first = [0.0; 2];
        let resp: Vec<[f64; 2]> = data.iter().map(|&x| params.responsibilities(x).0).collect();
        for (r, &x) in resp.iter().zip(data) {
            for k in 0..2 {
                mass[k] += r[k];
                first[k] += r[k] * x;
            }
        }
        // M-step
        let mut next = params;
        for k in 0..2 {
            if mass[k] <= 0.0 {
                // component lost all support; keep its shape
                continue;
            }
            let mu = first[k] / mass[k];
            let second: f64 = resp.iter().zip(data).map(|(r, &x)| r[k] * (x - mu) * (x - mu)).sum();
            next.means[k] = mu;
            next.variances[k] = (second / mass[k]).max(config.variance_floor);
        }
        let total = mass[0] + mass[1];
        next.weights = [mass[0] / total, mass[1] / total];
        for w in next.weights.iter_mut() {
            *w = w.clamp(f64::MIN_POSITIVE, 1.0);
        }
        let s = next.weights[0] + next.weights[1];
        next.weights = [next.weights[0] / s, next.weights[1] / s];
        params = next;

        let ll = params.log_likelihood(data);
        let gain = ll - history[history.len() - 1];
        history.push(ll);
        if gain < config.tol {
            converged = true;
            break;
        }
    }
    Ok(GmmFit { params, log_likelihoods: history, iterations, converged })
}

/// Posterior probability of the low-loss component for every value.
pub fn clean_posterior(values: &[f64], gmm: &GmmParams) -> Vec<f64> {
    let g = gmm.clean_component();
    values.iter().map(|&x| gmm.responsibilities(x).0[g].clamp(0.0, 1.0)).collect()
}

/// Threshold `t0` at the first filtering epoch, falling linearly to 0.5
/// over ten epochs and constant afterwards.
pub fn threshold_schedule(epoch_after_warmup: usize, t0: f64) -> Result<f64> {
    const FLOOR: f64 = 0.5;
    const RAMP: usize = 10;
    if !(FLOOR..=1.0).contains(&t0) {
        return Err(Error::invalid("initial threshold must lie in [0.5, 1]"));
    }
    if epoch_after_warmup >= RAMP {
        return Ok(FLOOR);
    }
    let e = epoch_after_warmup as f64;
    Ok((t0 * (RAMP as f64 - e) + FLOOR * e) / RAMP as f64)
}

/// Split of the training indices by clean posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct Division {
    clean: Vec<usize>,
    noisy: Vec<usize>,
    posteriors: Vec<f64>,
    threshold: f64,
}

impl Division {
    pub fn clean_indices(&self) -> &[usize] {
        &self.clean
    }

    pub fn noisy_indices(&self) -> &[usize] {
        &self.noisy
    }

    /// Posterior per position in the index list the division was built from.
    pub fn posteriors(&self) -> &[f64] {
        &self.posteriors
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn len(&self) -> usize {
        self.clean.len() + self.noisy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Dense clean flag for indices `0..n`.
    pub fn clean_mask(&self, n: usize) -> Vec<bool> {
        let mut mask = alloc::vec![false; n];
        for &i in &self.clean {
            if i < n {
                mask[i] = true;
            }
        }
        mask
    }

    /// The sorted union of clean and noisy indices.
    pub fn indices(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.clean.iter().chain(&self.noisy).copied().collect();
        all.sort_unstable();
        all
    }

    /// A division that flags every index clean (or every index noisy).
    pub fn uniform(indices: &[usize], clean: bool) -> Division {
        let w = if clean { 1.0 } else { 0.0 };
        let t = if clean { 0.0 } else { 1.0 + f64::EPSILON };
        divide(&alloc::vec![w; indices.len()], t, indices).expect("lengths agree")
    }
}

/// Clean set `{i : w_i >= t}`, noisy set its complement.
pub fn divide(posteriors: &[f64], threshold: f64, indices: &[usize]) -> Result<Division> {
    if posteriors.len() != indices.len() {
        return Err(Error::invalid("one posterior per index required"));
    }
    let (mut clean, mut noisy) = (Vec::new(), Vec::new());
    for (&w, &i) in posteriors.iter().zip(indices) {
        if w >= threshold {
            clean.push(i);
        } else {
            noisy.push(i);
        }
    }
    Ok(Division { clean, noisy, posteriors: posteriors.to_vec(), threshold })
}

/// Everything one filtering pass computed, kept for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub losses: Vec<f64>,
    pub normalized: Vec<f64>,
    pub gmm: GmmFit,
    pub division: Division,
}

/// Filter a loss vector: normalise, fit, score, threshold.
pub fn filter_losses(losses: &[f64], threshold: f64, em: &EmConfig) -> Result<FilterOutcome> {
    let normalized = max_normalize(losses)?;
    let gmm = fit_gmm_em(&normalized, em)?;
    let w = clean_posterior(&normalized, &gmm.params);
    let indices: Vec<usize> = (0..losses.len()).collect();
    let division = divide(&w, threshold, &indices)?;
    Ok(FilterOutcome { losses: losses.to_vec(), normalized, gmm, division })
}
