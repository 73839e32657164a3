//! Synthetic datasets, symmetric label noise, feature augmentation and
//! mini-batching.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed::{self, Stream};

/// One training or test example.
///
/// `clean_label` is ground truth and is only read by evaluation code;
/// training consumes `observed_label`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub index: usize,
    pub features: Vec<f64>,
    pub clean_label: usize,
    pub observed_label: usize,
}

impl LabeledSample {
    pub fn is_corrupted(&self) -> bool {
        self.clean_label != self.observed_label
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    classes: usize,
    dim: usize,
    samples: Vec<LabeledSample>,
}

impl Dataset {
    /// Build a dataset, checking labels, widths and index uniqueness.
    pub fn new(classes: usize, dim: usize, samples: Vec<LabeledSample>) -> Result<Self> {
        if classes < 2 {
            return Err(Error::invalid("need at least two classes"));
        }
        let mut seen = vec![false; samples.len()];
        for s in &samples {
            if s.features.len() != dim {
                return Err(Error::invalid("feature width does not match dim"));
            }
            if s.clean_label >= classes || s.observed_label >= classes {
                return Err(Error::invalid("label out of range"));
            }
            if s.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("non-finite feature"));
            }
            // indices are positions in [0, n)
            match seen.get_mut(s.index) {
                Some(flag) if !*flag => *flag = true,
                _ => return Err(Error::invalid("sample indices must be a permutation of 0..n")),
            }
        }
        let mut samples = samples;
        samples.sort_by_key(|s| s.index);
        Ok(Dataset { classes, dim, samples })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples ordered by index; `samples()[i].index == i`.
    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn features(&self) -> Matrix {
        let mut m = Matrix::zeros(self.len(), self.dim);
        for (i, s) in self.samples.iter().enumerate() {
            m.row_mut(i).copy_from_slice(&s.features);
        }
        m
    }

    pub fn observed_labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.observed_label).collect()
    }

    pub fn clean_labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.clean_label).collect()
    }

    /// Per-sample flag: observed label equals the clean label.
    pub fn truly_clean(&self) -> Vec<bool> {
        self.samples.iter().map(|s| !s.is_corrupted()).collect()
    }

    /// Sample counts per clean class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for s in &self.samples {
            counts[s.clean_label] += 1;
        }
        counts
    }

    /// Fraction of samples whose observed label differs from the clean one.
    pub fn corruption_rate(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let flipped = self.samples.iter().filter(|s| s.is_corrupted()).count();
        flipped as f64 / self.len() as f64
    }

    /// Corruption fraction within each clean class.
    pub fn corruption_rate_per_class(&self) -> Vec<f64> {
        let mut flipped = vec![0usize; self.classes];
        for s in self.samples.iter().filter(|s| s.is_corrupted()) {
            flipped[s.clean_label] += 1;
        }
        flipped
            .iter()
            .zip(self.class_counts())
            .map(|(&f, n)| if n == 0 { 0.0 } else { f as f64 / n as f64 })
            .collect()
    }
}

/// Parameters for isotropic Gaussian blobs.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobSpec {
    pub n: usize,
    pub classes: usize,
    pub dim: usize,
    /// Distance between adjacent class means.
    pub separation: f64,
    pub seed: u64,
    /// Relative class sizes; `None` means balanced.
    pub class_weights: Option<Vec<f64>>,
}

impl BlobSpec {
    pub fn balanced(n: usize, classes: usize, dim: usize, separation: f64, seed: u64) -> Self {
        BlobSpec { n, classes, dim, separation, seed, class_weights: None }
    }

    fn class_sizes(&self) -> Result<Vec<usize>> {
        let c = self.classes;
        match &self.class_weights {
            None => Ok((0..c).map(|k| self.n / c + usize::from(k < self.n % c)).collect()),
            Some(w) => {
                if w.len() != c || w.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                    return Err(Error::invalid("class weights must be positive, one per class"));
                }
                // Largest-remainder apportionment with one guaranteed sample per class.
                let spare = self.n - c;
                let total: f64 = w.iter().sum();
                let quotas: Vec<f64> = w.iter().map(|x| x / total * spare as f64).collect();
                let mut sizes: Vec<usize> = quotas.iter().map(|q| 1 + *q as usize).collect();
                let mut left = self.n - sizes.iter().sum::<usize>();
                let mut order: Vec<usize> = (0..c).collect();
                order.sort_by(|&a, &b| {
                    let ra = quotas[a] - libm::floor(quotas[a]);
                    let rb = quotas[b] - libm::floor(quotas[b]);
                    rb.total_cmp(&ra).then(a.cmp(&b))
                });
                for k in order.into_iter().cycle() {
                    if left == 0 {
                        break;
                    }
                    sizes[k] += 1;
                    left -= 1;
                }
                Ok(sizes)
            }
        }
    }
}

/// Draw `n` samples from `classes` unit-variance Gaussians whose means sit
/// on the first axis, `separation` apart and centred on the origin.
pub fn generate_blobs(spec: &BlobSpec) -> Result<Dataset> {
    if spec.classes < 2 || spec.n < spec.classes {
        return Err(Error::invalid("need n >= classes >= 2"));
    }
    if spec.dim < 2 {
        return Err(Error::invalid("need dim >= 2"));
    }
    if !(spec.separation > 0.0) || !spec.separation.is_finite() {
        return Err(Error::invalid("separation must be positive"));
    }
    let sizes = spec.class_sizes()?;
    let mut rng = seed::stream(spec.seed);
    let centre = (spec.classes - 1) as f64 / 2.0;

    let mut rows = Vec::with_capacity(spec.n);
    for (class, &size) in sizes.iter().enumerate() {
        let offset = (class as f64 - centre) * spec.separation;
        for _ in 0..size {
            let mut x: Vec<f64> = (0..spec.dim).map(|_| rng.sample(StandardNormal)).collect();
            x[0] += offset;
            rows.push((x, class));
        }
    }
    rows.shuffle(&mut rng);

    let samples = rows
        .into_iter()
        .enumerate()
        .map(|(index, (features, label))| LabeledSample {
            index,
            features,
            clean_label: label,
            observed_label: label,
        })
        .collect();
    Dataset::new(spec.classes, spec.dim, samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseScheme {
    /// A fixed fraction of every class is relabelled uniformly to one of
    /// the other classes.
    #[default]
    SymmetricPerClass,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    gamma: f64,
    pub seed: u64,
    pub scheme: NoiseScheme,
}

impl NoiseSpec {
    pub fn new(gamma: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::invalid("noise rate must lie in [0, 1]"));
        }
        Ok(NoiseSpec { gamma, seed, scheme: NoiseScheme::SymmetricPerClass })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

/// Flip exactly `round(gamma * n_c)` labels in every class `c`.
///
/// Flipped samples get an observed label drawn uniformly from the other
/// classes. Clean labels are never touched.
pub fn inject_symmetric_noise(dataset: &Dataset, spec: &NoiseSpec) -> Dataset {
    let mut out = dataset.clone();
    if spec.gamma == 0.0 {
        return out;
    }
    let c = dataset.classes;
    let mut rng = seed::stream(spec.seed);
    for class in 0..c {
        let mut members: Vec<usize> = out
            .samples
            .iter()
            .filter(|s| s.clean_label == class)
            .map(|s| s.index)
            .collect();
        let quota = libm::round(spec.gamma * members.len() as f64) as usize;
        let (chosen, _) = members.partial_shuffle(&mut rng, quota);
        for &i in chosen.iter() {
            let r = rng.random_range(0..c - 1);
            out.samples[i].observed_label = if r >= class { r + 1 } else { r };
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentationPolicy {
    pub gaussian_sigma: f64,
    pub feature_dropout_prob: f64,
    pub scale_range: (f64, f64),
    pub seed: u64,
}

impl AugmentationPolicy {
    pub fn identity() -> Self {
        AugmentationPolicy {
            gaussian_sigma: 0.0,
            feature_dropout_prob: 0.0,
            scale_range: (1.0, 1.0),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.scale_range;
        if !(self.gaussian_sigma >= 0.0) || !self.gaussian_sigma.is_finite() {
            return Err(Error::invalid("augmentation sigma must be nonnegative"));
        }
        if !(0.0..=1.0).contains(&self.feature_dropout_prob) {
            return Err(Error::invalid("dropout probability must lie in [0, 1]"));
        }
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::invalid("scale range must satisfy 0 < low <= high"));
        }
        Ok(())
    }

    /// The random stream used for one network's augmentations.
    pub fn stream(&self, network_seed: u64) -> Stream {
        seed::stream(seed::derive(self.seed ^ network_seed, seed::AUGMENT))
    }
}

impl Default for AugmentationPolicy {
    fn default() -> Self {
        AugmentationPolicy {
            gaussian_sigma: 0.2,
            feature_dropout_prob: 0.05,
            scale_range: (0.8, 1.2),
            seed: 0,
        }
    }
}

/// Random view of `features`: a uniform scale from `scale_range`, then
/// per-coordinate dropout, then additive Gaussian noise.
///
/// Draws nothing for a disabled stage, so the identity policy returns the
/// input bit for bit.
pub fn augment(features: &[f64], policy: &AugmentationPolicy, rng: &mut Stream) -> Vec<f64> {
    let (lo, hi) = policy.scale_range;
    let scale = if lo < hi { rng.random_range(lo..=hi) } else { lo };
    let mut out: Vec<f64> = features.iter().map(|x| x * scale).collect();
    if policy.feature_dropout_prob > 0.0 {
        for v in out.iter_mut() {
            if rng.random_bool(policy.feature_dropout_prob) {
                *v = 0.0;
            }
        }
    }
    if policy.gaussian_sigma > 0.0 {
        for v in out.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v += policy.gaussian_sigma * z;
        }
    }
    out
}

/// Augment the listed samples into a `len(indices) x dim` matrix.
pub fn augment_batch(
    dataset: &Dataset,
    indices: &[usize],
    policy: &AugmentationPolicy,
    rng: &mut Stream,
) -> Matrix {
    let mut m = Matrix::zeros(indices.len(), dataset.dim);
    for (r, &i) in indices.iter().enumerate() {
        let v = augment(&dataset.samples[i].features, policy, rng);
        m.row_mut(r).copy_from_slice(&v);
    }
    m
}

/// Shuffle `0..n` with `shuffle_seed` and cut it into batches of
/// `batch_size`; the last batch may be short.
pub fn batches(n: usize, batch_size: usize, shuffle_seed: u64) -> Result<Vec<Vec<usize>>> {
    if n == 0 {
        return Err(Error::invalid("cannot batch an empty dataset"));
    }
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::stream(seed::derive(shuffle_seed, seed::SHUFFLE)));
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Shuffle seed for one network and epoch.
pub fn epoch_shuffle_seed(network_seed: u64, epoch: usize) -> u64 {
    seed::derive(network_seed, epoch as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(n: usize, sep: f64, seed: u64) -> Dataset {
        generate_blobs(&BlobSpec::balanced(n, 2, 2, sep, seed)).unwrap()
    }

    #[test]
    fn balanced_split() {
        let d = blobs(4, 10.0, 0);
        assert_eq!(d.class_counts(), vec![2, 2]);
        let mut labels = d.observed_labels();
        labels.sort();
        assert_eq!(labels, vec![0, 0, 1, 1]);
        assert_eq!(d.observed_labels(), d.clean_labels());
    }

    #[test]
    fn remainder_goes_to_one_class() {
        let d = blobs(5, 10.0, 3);
        let mut counts = d.class_counts();
        counts.sort();
        assert_eq!(counts, vec![2, 3]);
    }

    #[test]
    fn imbalance_weights() {
        let spec = BlobSpec {
            class_weights: Some(vec![4.0, 1.0]),
            ..BlobSpec::balanced(103, 2, 3, 4.0, 1)
        };
        let d = generate_blobs(&spec).unwrap();
        let counts = d.class_counts();
        assert_eq!(counts.iter().sum::<usize>(), 103);
        assert_eq!(counts, vec![82, 21]);
    }

    #[test]
    fn bad_arguments() {
        assert!(generate_blobs(&BlobSpec::balanced(1, 2, 2, 1.0, 0)).is_err());
        assert!(generate_blobs(&BlobSpec::balanced(10, 1, 2, 1.0, 0)).is_err());
        assert!(generate_blobs(&BlobSpec::balanced(10, 2, 1, 1.0, 0)).is_err());
        assert!(generate_blobs(&BlobSpec::balanced(10, 2, 2, 0.0, 0)).is_err());
        assert!(NoiseSpec::new(1.5, 0).is_err());
        assert!(NoiseSpec::new(-0.1, 0).is_err());
    }

    #[test]
    fn zero_noise_is_identity() {
        let d = blobs(50, 3.0, 1);
        assert_eq!(inject_symmetric_noise(&d, &NoiseSpec::new(0.0, 9).unwrap()), d);
    }

    #[test]
    fn full_flip_binary() {
        let d = blobs(51, 3.0, 1);
        let noisy = inject_symmetric_noise(&d, &NoiseSpec::new(1.0, 9).unwrap());
        assert!(noisy.samples().iter().all(LabeledSample::is_corrupted));
        assert_eq!(noisy.clean_labels(), d.clean_labels());
    }

    #[test]
    fn exact_per_class_quota() {
        let d = blobs(1000, 3.0, 2);
        let noisy = inject_symmetric_noise(&d, &NoiseSpec::new(0.4, 5).unwrap());
        let flipped: Vec<usize> = (0..2)
            .map(|c| {
                noisy
                    .samples()
                    .iter()
                    .filter(|s| s.clean_label == c && s.is_corrupted())
                    .count()
            })
            .collect();
        assert_eq!(flipped, vec![200, 200]);
        assert_eq!(noisy.corruption_rate(), 0.4);
        // deterministic in the seed
        assert_eq!(noisy, inject_symmetric_noise(&d, &NoiseSpec::new(0.4, 5).unwrap()));
    }

    #[test]
    fn multiclass_flip_targets_other_classes() {
        let spec = BlobSpec::balanced(600, 4, 2, 3.0, 4);
        let d = generate_blobs(&spec).unwrap();
        let noisy = inject_symmetric_noise(&d, &NoiseSpec::new(0.5, 1).unwrap());
        let mut hits = [[0usize; 4]; 4];
        for s in noisy.samples() {
            hits[s.clean_label][s.observed_label] += 1;
        }
        for (c, row) in hits.iter().enumerate() {
            assert_eq!(row[c], 75);
            // every other class receives some flips
            assert!(row.iter().enumerate().all(|(k, &n)| k == c || n > 0));
        }
    }

    #[test]
    fn identity_augmentation_is_exact() {
        let x = [1.5, -0.0, 3.25e-7, -2.0];
        let mut rng = seed::stream(1);
        assert_eq!(augment(&x, &AugmentationPolicy::identity(), &mut rng), x.to_vec());
        assert!(augment(&x, &AugmentationPolicy::identity(), &mut rng)[1].is_sign_negative());
    }

    #[test]
    fn full_dropout_zeroes() {
        let policy = AugmentationPolicy {
            feature_dropout_prob: 1.0,
            ..AugmentationPolicy::identity()
        };
        let mut rng = seed::stream(1);
        assert_eq!(augment(&[1.0, 2.0, 3.0], &policy, &mut rng), vec![0.0; 3]);
    }

    #[test]
    fn successive_views_differ() {
        let policy = AugmentationPolicy {
            gaussian_sigma: 0.1,
            ..AugmentationPolicy::identity()
        };
        let mut rng = seed::stream(7);
        let x = [0.3, -0.4];
        let a = augment(&x, &policy, &mut rng);
        let b = augment(&x, &policy, &mut rng);
        let d: f64 = a.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum();
        assert!(d > 0.0);
        assert_eq!(x, [0.3, -0.4]);
    }

    #[test]
    fn batch_shapes() {
        let b = batches(10, 4, 0).unwrap();
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4, 2]);
        assert_eq!(b, batches(10, 4, 0).unwrap());
        assert_ne!(b, batches(10, 4, 1).unwrap());

        let one = batches(64, 64, 3).unwrap();
        assert_eq!(one.len(), 1);
        let mut all = one[0].clone();
        all.sort();
        assert_eq!(all, (0..64).collect::<Vec<_>>());

        assert!(batches(0, 4, 0).is_err());
    }

    #[test]
    fn dataset_rejects_duplicate_indices() {
        let s = LabeledSample { index: 0, features: vec![0.0, 0.0], clean_label: 0, observed_label: 0 };
        assert!(Dataset::new(2, 2, vec![s.clone(), s]).is_err());
    }
}
