use cotrain_core::cotrain::{run_experiment, Ablation, Experiment, TrainConfig};
use cotrain_core::data::{self, generate_blobs, inject_symmetric_noise, BlobSpec, Dataset, NoiseSpec};
use cotrain_core::filter::{filter_losses, EmConfig};
use cotrain_core::losses::cross_entropy_grad;
use cotrain_core::metrics::{selection_precision_recall, SelectionRecord};
use cotrain_core::model::{Adam, AdamConfig, NetworkParams, OutputGrads};

/// Least squares on `[x, 1]` against targets `+-1`, solved by Gaussian
/// elimination on the normal equations.
fn least_squares_accuracy(fit: &Dataset, eval: &Dataset) -> f64 {
    let d = fit.dim() + 1;
    let mut a = vec![vec![0.0; d + 1]; d];
    for s in fit.samples() {
        let mut x = s.features.clone();
        x.push(1.0);
        let y = if s.clean_label == 1 { 1.0 } else { -1.0 };
        for i in 0..d {
            for j in 0..d {
                a[i][j] += x[i] * x[j];
            }
            a[i][d] += x[i] * y;
        }
    }
    for col in 0..d {
        let pivot = (col..d).max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs())).unwrap();
        a.swap(col, pivot);
        for row in 0..d {
            if row != col {
                let f = a[row][col] / a[col][col];
                let pivot_row = a[col].clone();
                for (x, p) in a[row][col..].iter_mut().zip(&pivot_row[col..]) {
                    *x -= f * p;
                }
            }
        }
    }
    let w: Vec<f64> = (0..d).map(|i| a[i][d] / a[i][i]).collect();
    let hits = eval
        .samples()
        .iter()
        .filter(|s| {
            let score: f64 = s.features.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() + w[d - 1];
            (score > 0.0) == (s.clean_label == 1)
        })
        .count();
    hits as f64 / eval.len() as f64
}

#[test]
fn default_blobs_are_linearly_separable() {
    for s in 0..3 {
        let train = generate_blobs(&BlobSpec::balanced(2000, 2, 2, 6.0, 100 + s)).unwrap();
        let test = generate_blobs(&BlobSpec::balanced(1000, 2, 2, 6.0, 300 + s)).unwrap();
        let acc = least_squares_accuracy(&train, &test);
        assert!(acc >= 0.99, "seed {s}: {acc}");
    }
}

#[test]
fn oracle_losses_select_exactly_the_clean_set() {
    let clean = generate_blobs(&BlobSpec::balanced(1000, 2, 2, 6.0, 7)).unwrap();
    let noisy = inject_symmetric_noise(&clean, &NoiseSpec::new(0.4, 8).unwrap());
    let truly_clean = noisy.truly_clean();
    assert_eq!(truly_clean.iter().filter(|&&c| !c).count(), 400);
    let losses: Vec<f64> = truly_clean.iter().map(|&c| if c { 0.01 } else { 0.99 }).collect();
    for t in [0.9, 0.7, 0.5] {
        let outcome = filter_losses(&losses, t, &EmConfig::default()).unwrap();
        let record = SelectionRecord::new(
            outcome.division.posteriors().to_vec(),
            truly_clean.clone(),
            outcome.division.clean_mask(1000),
        )
        .unwrap();
        assert_eq!(selection_precision_recall(&record), (Some(1.0), Some(1.0)));
        assert_eq!(record.auc(), Some(1.0));
    }
}

fn small_sets(gamma: f64) -> (Dataset, Dataset) {
    let train = generate_blobs(&BlobSpec::balanced(300, 2, 2, 4.0, 31)).unwrap();
    let train = inject_symmetric_noise(&train, &NoiseSpec::new(gamma, 32).unwrap());
    let test = generate_blobs(&BlobSpec::balanced(200, 2, 2, 4.0, 33)).unwrap();
    (train, test)
}

fn small_config(ablation: Ablation) -> TrainConfig {
    TrainConfig {
        total_epochs: 10,
        warmup_epochs: 2,
        hidden1: 16,
        hidden2: 16,
        proj_hidden: 16,
        proj_dim: 8,
        ablation,
        ..TrainConfig::default()
    }
}

/// Plain minibatch cross-entropy training written directly against the
/// network and optimizer primitives. Returns the test accuracy after
/// every epoch.
fn reference_ce(config: &TrainConfig, train: &Dataset, test: &Dataset) -> Vec<f64> {
    let arch = config.architecture(train.dim(), train.classes());
    let mut net = NetworkParams::init(arch, config.seed_a).unwrap();
    let adam_cfg = AdamConfig { weight_decay: config.weight_decay, ..AdamConfig::default() };
    let mut adam = Adam::new(&net, adam_cfg);
    let mut rng = config.augmentation.stream(config.seed_a);
    let labels = train.observed_labels();
    let test_x = test.features();
    let truth = test.clean_labels();
    let mut history = Vec::new();
    let mut lr = config.lr;
    for epoch in 0..config.total_epochs {
        if epoch > 0 {
            lr = config.lr * libm::pow(config.lr_decay_per_epoch, epoch as f64);
        }
        let seed = data::epoch_shuffle_seed(config.seed_a, epoch);
        for idx in data::batches(train.len(), config.batch_size, seed).unwrap() {
            let x = data::augment_batch(train, &idx, &config.augmentation, &mut rng);
            let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let cache = net.forward_cached(&x).unwrap();
            let (_, g) = cross_entropy_grad(&cache.output.logits, &y).unwrap();
            let grads = net.backward(&cache, &OutputGrads { logits: Some(g), ..Default::default() });
            adam.step(&mut net, &grads, lr).unwrap();
        }
        let logits = net.forward(&test_x).unwrap().logits;
        let hits = (0..test.len())
            .filter(|&r| {
                let row = logits.row(r);
                let best = (1..row.len()).fold(0, |b, c| if row[c] > row[b] { c } else { b });
                best == truth[r]
            })
            .count();
        history.push(hits as f64 / test.len() as f64);
    }
    history
}

#[test]
fn baseline_matches_reference_ce_loop() {
    let (train, test) = small_sets(0.3);
    let config = small_config(Ablation::BASELINE);
    let report = run_experiment(&config, &train, &test).unwrap();
    let ours: Vec<f64> = report.epochs.iter().map(|r| r.test_accuracy).collect();
    assert_eq!(ours, reference_ce(&config, &train, &test));
    assert_eq!(report.mode, "baseline_ce");
    assert!(report.final_selection_auc.is_none());
}

#[test]
fn divisions_are_cross_fed_and_schedules_follow() {
    let (train, test) = small_sets(0.4);
    let config = small_config(Ablation::FULL);
    let mut exp = Experiment::new(config.clone(), &train, &test).unwrap();
    let mut epoch = 0;
    while !exp.is_done() {
        let result = exp.step().unwrap();
        let r = &result.report;
        let expected_lambda = if epoch < 2 { 0.0 } else { (10.0 * (epoch - 2) as f64 / 10.0).min(10.0) };
        assert_eq!(r.lambda, expected_lambda, "epoch {epoch}");
        if epoch < 2 {
            assert!(result.filters.is_empty());
            assert_eq!(r.threshold, None);
        } else {
            let e = (epoch - 2) as f64;
            assert_eq!(r.threshold, Some((0.9 * (10.0 - e) + 0.5 * e) / 10.0));
            let (fa, fb) = (&result.filters[0], &result.filters[1]);
            assert_eq!((fa.0, fb.0), ('A', 'B'));
            assert_eq!(result.trained_on[0], ('A', fb.1.division.clone()));
            assert_eq!(result.trained_on[1], ('B', fa.1.division.clone()));
            let counts = (fa.1.division.clean_indices().len(), fb.1.division.clean_indices().len());
            assert_eq!(r.selection_variation, Some(counts.0.abs_diff(counts.1)));
        }
        epoch += 1;
    }
    let pair = exp.pair();
    assert_eq!(pair.a.optimizer_steps(), pair.a.ema_updates());
    assert_eq!(pair.a.optimizer_steps(), 10 * 10);
}

#[test]
fn single_network_filters_itself() {
    let (train, test) = small_sets(0.4);
    let config = small_config(Ablation { single_network: true, ..Ablation::FULL });
    let mut exp = Experiment::new(config, &train, &test).unwrap();
    for _ in 0..3 {
        exp.step().unwrap();
    }
    let result = exp.step().unwrap();
    assert_eq!(result.filters.len(), 1);
    assert_eq!(result.trained_on, vec![('A', result.filters[0].1.division.clone())]);
    assert_eq!(exp.pair().b.optimizer_steps(), 0);
}
