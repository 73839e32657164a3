use cotrain_core::data::{
    batches, generate_blobs, inject_symmetric_noise, BlobSpec, NoiseSpec,
};
use cotrain_core::filter::{clean_posterior, divide, fit_gmm_em, EmConfig, GmmParams};
use cotrain_core::losses::{
    consistency, cross_entropy, global_relation_loss, local_contrastive_loss, relation_matrix,
    softmax_rows, ContrastiveBatch,
};
use cotrain_core::metrics::{loss_histogram, roc_auc};
use cotrain_core::model::{ema_update, Architecture, NetworkParams};
use cotrain_core::Matrix;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize, lo: f64, hi: f64) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(lo..hi, rows * cols)
        .prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cross_entropy_nonnegative_and_monotone(m in matrix(3, 4, -5.0, 5.0), y in prop::collection::vec(0usize..4, 3), bump in 0.01f64..3.0) {
        let v = cross_entropy(&m, &y).unwrap();
        prop_assert!(v >= 0.0);
        let mut up = m.clone();
        for (r, &label) in y.iter().enumerate() {
            up[(r, label)] += bump;
        }
        prop_assert!(cross_entropy(&up, &y).unwrap() < v);
    }

    #[test]
    fn consistency_symmetric(a in matrix(4, 3, -3.0, 3.0), b in matrix(4, 3, -3.0, 3.0)) {
        let (p, q) = (softmax_rows(&a), softmax_rows(&b));
        prop_assert_eq!(consistency(&p, &q).unwrap(), consistency(&q, &p).unwrap());
        prop_assert_eq!(consistency(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn relation_rows_unit_and_scale_free(f in matrix(5, 6, 0.01, 3.0), c in 0.1f64..10.0) {
        let m = relation_matrix(&f).unwrap();
        for r in m.as_matrix().iter_rows() {
            let n: f64 = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((n - 1.0).abs() <= 1e-9);
            prop_assert!(r.iter().all(|&v| v >= 0.0));
        }
        let mut global = f.clone();
        global.as_mut_slice().iter_mut().for_each(|v| *v *= c);
        let mg = relation_matrix(&global).unwrap();
        for (a, b) in m.as_matrix().as_slice().iter().zip(mg.as_matrix().as_slice()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn global_loss_symmetric_and_nonnegative(f in matrix(4, 5, 0.0, 2.0), g in matrix(4, 5, 0.0, 2.0)) {
        let (a, b) = (relation_matrix(&f).unwrap(), relation_matrix(&g).unwrap());
        let ab = global_relation_loss(&a, &b).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - global_relation_loss(&b, &a).unwrap()).abs() <= 1e-12);
        prop_assert!(global_relation_loss(&a, &a).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn contrastive_invariances(first in matrix(4, 3, -2.0, 2.0), second in matrix(4, 3, -2.0, 2.0), c in 0.01f64..100.0, tau in 0.1f64..2.0, perm in Just(vec![2usize, 0, 3, 1])) {
        let base = local_contrastive_loss(&ContrastiveBatch::two_views(&first, &second, tau).unwrap()).unwrap();
        let scale = |m: &Matrix| { let mut s = m.clone(); s.as_mut_slice().iter_mut().for_each(|v| *v *= c); s };
        let scaled = local_contrastive_loss(&ContrastiveBatch::two_views(&scale(&first), &scale(&second), tau).unwrap()).unwrap();
        prop_assert!((base - scaled).abs() <= 1e-9);
        let permuted = local_contrastive_loss(&ContrastiveBatch::two_views(&first.select_rows(&perm), &second.select_rows(&perm), tau).unwrap()).unwrap();
        prop_assert!((base - permuted).abs() <= 1e-9);
    }

    #[test]
    fn em_log_likelihood_monotone(data in prop::collection::vec(0.0f64..1.0, 4..300)) {
        let fit = fit_gmm_em(&data, &EmConfig::default()).unwrap();
        for w in fit.log_likelihoods.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-10, "{} -> {}", w[0], w[1]);
        }
        let p = fit.params;
        prop_assert!((p.weights[0] + p.weights[1] - 1.0).abs() <= 1e-12);
        prop_assert!(p.variances.iter().all(|&v| v >= 1e-6));
    }

    #[test]
    fn division_partitions(w in prop::collection::vec(0.0f64..1.0, 0..100), t in 0.0f64..1.1) {
        let idx: Vec<usize> = (0..w.len()).collect();
        let d = divide(&w, t, &idx).unwrap();
        prop_assert_eq!(d.indices(), idx);
        for &i in d.clean_indices() { prop_assert!(w[i] >= t); }
        for &i in d.noisy_indices() { prop_assert!(w[i] < t); }
    }

    #[test]
    fn auc_complement(scores in prop::collection::hash_set(0u32..100_000, 2..120), flip in any::<u64>()) {
        let scores: Vec<f64> = scores.into_iter().map(|s| s as f64).collect();
        let labels: Vec<bool> = (0..scores.len()).map(|i| (flip >> (i % 64)) & 1 == 1 || i == 0).collect();
        prop_assume!(labels.iter().any(|&l| !l));
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        let sum = roc_auc(&scores, &labels).unwrap() + roc_auc(&neg, &labels).unwrap();
        prop_assert!((sum - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn histogram_conserves_counts(losses in prop::collection::vec(0.0f64..5.0, 1..200), bins in 1usize..60) {
        let flags: Vec<bool> = losses.iter().map(|l| *l < 2.0).collect();
        let h = loss_histogram(&losses, &flags, bins).unwrap();
        prop_assert_eq!(h.clean.iter().sum::<usize>(), flags.iter().filter(|&&f| f).count());
        prop_assert_eq!(h.noisy.iter().sum::<usize>(), flags.iter().filter(|&&f| !f).count());
        prop_assert_eq!(h.edges.len(), bins + 1);
    }

    #[test]
    fn batches_cover_once(n in 1usize..300, b in 1usize..70, seed in any::<u64>()) {
        let mut all: Vec<usize> = batches(n, b, seed).unwrap().concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn noise_counts_per_class(n in 20usize..400, gamma in 0.0f64..=1.0, seed in any::<u64>()) {
        let d = generate_blobs(&BlobSpec::balanced(n, 3, 2, 2.0, seed)).unwrap();
        let noisy = inject_symmetric_noise(&d, &NoiseSpec::new(gamma, seed ^ 1).unwrap());
        prop_assert_eq!(noisy.clean_labels(), d.clean_labels());
        for (c, &n_c) in d.class_counts().iter().enumerate() {
            let flipped = noisy.samples().iter().filter(|s| s.clean_label == c && s.is_corrupted()).count();
            prop_assert_eq!(flipped, (gamma * n_c as f64).round() as usize);
            let rate = noisy.corruption_rate_per_class()[c];
            prop_assert!((rate - gamma).abs() <= 1.0 / n_c as f64);
        }
    }
}

#[test]
fn ema_matches_closed_form() {
    let arch = Architecture::new(3, 2);
    let student = NetworkParams::init(arch, 1).unwrap();
    let start = NetworkParams::init(arch, 2).unwrap();
    let mut teacher = start.clone();
    for _ in 0..50 {
        ema_update(&mut teacher, &student, 0.9).unwrap();
    }
    let decay = 0.9f64.powi(50);
    for ((t, w), t0) in teacher.values().zip(student.values()).zip(start.values()) {
        assert!((t - (w + decay * (t0 - w))).abs() <= 1e-12);
    }
}

#[test]
fn posterior_falls_in_the_upper_tail() {
    let g = GmmParams { means: [0.1, 0.8], variances: [0.01, 0.02], weights: [0.6, 0.4] };
    let xs: Vec<f64> = (0..50).map(|k| 0.8 + k as f64 * 0.004).collect();
    let w = clean_posterior(&xs, &g);
    assert!(w.windows(2).all(|p| p[1] <= p[0]));
}

#[test]
fn separated_mixture_classified() {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let mut rng = cotrain_core::seed::stream(12);
    // components 0.2 and 0.7 with sigma 0.05: ten sigma apart
    let mut data = Vec::new();
    let mut truth = Vec::new();
    for k in 0..1000 {
        let low = k % 3 != 0;
        let z: f64 = rng.sample(StandardNormal);
        data.push(if low { 0.2 } else { 0.7 } + 0.05 * z);
        truth.push(low);
    }
    let fit = fit_gmm_em(&data, &EmConfig::default()).unwrap();
    let w = clean_posterior(&data, &fit.params);
    let agree = w.iter().zip(&truth).filter(|(w, t)| (**w >= 0.5) == **t).count();
    assert!(agree as f64 / 1000.0 >= 0.99, "{agree}");
}
