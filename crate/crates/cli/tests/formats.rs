use cotrain::checkpoint::NetworkRecord;
use cotrain::config::{AblationFlags, ExperimentConfig, Seeds};
use cotrain::dataset_csv::{self, format_feature};
use cotrain_core::data::{generate_blobs, inject_symmetric_noise, BlobSpec, NoiseSpec};
use cotrain_core::model::{Architecture, NetworkParams};
use proptest::prelude::*;

fn config_strategy() -> impl Strategy<Value = ExperimentConfig> {
    (
        (10usize..5000, 2usize..6, 2usize..8, 0.1f64..20.0, 0.0f64..=1.0),
        (6usize..100, 0usize..6, 1usize..128, 1e-5f64..1e-1, 0.5f64..=1.0, 0.0f64..=1.0),
        (0.05f64..2.0, 0.0f64..50.0, 0.5f64..=1.0, 0.0f64..1.0, any::<[bool; 5]>()),
        (any::<u32>(), any::<u32>(), any::<u64>(), any::<bool>(), 1usize..200),
    )
        .prop_map(|(d, t, u, s)| {
            let mut c = ExperimentConfig::default();
            (c.data.n_train, c.data.classes, c.data.dim, c.data.separation, c.noise.gamma) = d;
            c.data.n_train = c.data.n_train.max(c.data.classes);
            let (epochs, warm, batch, lr, decay, ema) = t;
            (c.training.total_epochs, c.training.warmup_epochs, c.training.batch_size) = (epochs, warm, batch);
            (c.training.lr, c.training.lr_decay_per_epoch, c.training.ema_alpha) = (lr.max(1e-9), decay.max(1e-3), ema);
            let (tau, lambda, t0, sigma, flags) = u;
            (c.training.tau, c.training.lambda_max, c.training.t0) = (tau, lambda, t0);
            c.training.augmentation.gaussian_sigma = sigma;
            let [single_network, no_self_ensemble, no_global, no_local, ce_only] = flags;
            c.ablation = AblationFlags { single_network, no_self_ensemble, no_global, no_local, ce_only };
            let (a, b, data, dump, bins) = s;
            c.seeds = Seeds { network_a: a as u64, network_b: b as u64 + (1 << 33), data };
            c.output.dump_filters = dump;
            c.output.histogram_bins = bins;
            c
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_round_trip(c in config_strategy()) {
        prop_assume!(c.validate().is_ok());
        let text = c.to_json();
        let back = ExperimentConfig::from_json(&text).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.to_json(), text);
    }

    #[test]
    fn feature_formatting_keeps_nine_digits(v in -1e6f64..1e6) {
        let s = format_feature(v);
        let back: f64 = s.parse().unwrap();
        if v != 0.0 {
            prop_assert!(((back - v) / v).abs() <= 5e-9);
        }
        prop_assert_eq!(format_feature(back), s);
    }

    #[test]
    fn checkpoint_round_trip(seed in any::<u64>(), d in 1usize..6, c in 2usize..5) {
        let p = NetworkParams::init(Architecture { input_dim: d, hidden1: 7, hidden2: 5, classes: c, proj_hidden: 4, proj_dim: 3 }, seed).unwrap();
        let text = serde_json::to_string(&NetworkRecord::from(&p)).unwrap();
        let q = serde_json::from_str::<NetworkRecord>(&text).unwrap().to_params().unwrap();
        prop_assert!(p.values().zip(q.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

#[test]
fn dataset_csv_round_trip() {
    let clean = generate_blobs(&BlobSpec::balanced(250, 3, 4, 2.5, 4)).unwrap();
    let noisy = inject_symmetric_noise(&clean, &NoiseSpec::new(0.3, 5).unwrap());
    let mut bytes = Vec::new();
    dataset_csv::write_to(&noisy, &mut bytes).unwrap();
    let back = dataset_csv::read_from(bytes.as_slice(), 3).unwrap();
    assert_eq!(back.len(), 250);
    assert_eq!(back.observed_labels(), noisy.observed_labels());
    assert_eq!(back.clean_labels(), noisy.clean_labels());
    for (a, b) in back.samples().iter().zip(noisy.samples()) {
        assert_eq!(a.index, b.index);
        for (x, y) in a.features.iter().zip(&b.features) {
            assert_eq!(x.to_string(), format_feature(*y));
        }
    }
    // a second pass is exact
    let mut again = Vec::new();
    dataset_csv::write_to(&back, &mut again).unwrap();
    assert_eq!(again, bytes);
}
