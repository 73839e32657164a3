//! JSON experiment configuration.
//!
//! Every key is optional; absent keys take the defaults below and unknown
//! keys are rejected.

use std::path::{Path, PathBuf};

use cotrain_core::cotrain::{Ablation, TrainConfig};
use cotrain_core::data::{
    generate_blobs, inject_symmetric_noise, AugmentationPolicy, BlobSpec, Dataset, NoiseSpec,
};
use cotrain_core::filter::EmConfig;
use cotrain_core::seed;
use serde::{Deserialize, Serialize};

use crate::dataset_csv;
use crate::error::{CliError, CliResult};

// Labels for the streams derived from the data seed.
const TRAIN_SET: u64 = 101;
const LABEL_NOISE: u64 = 102;
const TEST_SET: u64 = 103;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub classes: usize,
    pub dim: usize,
    pub separation: f64,
    /// Relative class sizes of the generated sets; `null` for balanced.
    pub class_weights: Option<Vec<f64>>,
    /// Read the (already noisy) training set from this CSV instead of
    /// generating it.
    pub train_csv: Option<PathBuf>,
    pub test_csv: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            n_train: 2000,
            n_test: 1000,
            classes: 2,
            dim: 2,
            separation: 6.0,
            class_weights: None,
            train_csv: None,
            test_csv: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    SymmetricPerClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub gamma: f64,
    pub scheme: NoiseKind,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { gamma: 0.4, scheme: NoiseKind::SymmetricPerClass }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationConfig {
    pub gaussian_sigma: f64,
    pub feature_dropout_prob: f64,
    pub scale_range: [f64; 2],
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        let p = AugmentationPolicy::default();
        AugmentationConfig {
            gaussian_sigma: p.gaussian_sigma,
            feature_dropout_prob: p.feature_dropout_prob,
            scale_range: [p.scale_range.0, p.scale_range.1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub variance_floor: f64,
    pub init_jitter: f64,
}

impl Default for EmSettings {
    fn default() -> Self {
        let em = EmConfig::default();
        EmSettings {
            tol: em.tol,
            max_iter: em.max_iter,
            variance_floor: em.variance_floor,
            init_jitter: em.init_jitter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub total_epochs: usize,
    pub warmup_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay_per_epoch: f64,
    pub weight_decay: f64,
    pub ema_alpha: f64,
    pub tau: f64,
    pub lambda_max: f64,
    pub ramp_epochs: usize,
    pub t0: f64,
    pub hidden1: usize,
    pub hidden2: usize,
    pub proj_hidden: usize,
    pub proj_dim: usize,
    pub augmentation: AugmentationConfig,
    pub em: EmSettings,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainingConfig {
            total_epochs: t.total_epochs,
            warmup_epochs: t.warmup_epochs,
            batch_size: t.batch_size,
            lr: t.lr,
            lr_decay_per_epoch: t.lr_decay_per_epoch,
            weight_decay: t.weight_decay,
            ema_alpha: t.ema_alpha,
            tau: t.tau,
            lambda_max: t.lambda_max,
            ramp_epochs: t.ramp_epochs,
            t0: t.t0,
            hidden1: t.hidden1,
            hidden2: t.hidden2,
            proj_hidden: t.proj_hidden,
            proj_dim: t.proj_dim,
            augmentation: AugmentationConfig::default(),
            em: EmSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationFlags {
    pub single_network: bool,
    pub no_self_ensemble: bool,
    pub no_global: bool,
    pub no_local: bool,
    pub ce_only: bool,
}

impl From<AblationFlags> for Ablation {
    fn from(f: AblationFlags) -> Self {
        Ablation {
            single_network: f.single_network,
            no_self_ensemble: f.no_self_ensemble,
            no_global: f.no_global,
            no_local: f.no_local,
            ce_only: f.ce_only,
        }
    }
}

impl From<Ablation> for AblationFlags {
    fn from(a: Ablation) -> Self {
        AblationFlags {
            single_network: a.single_network,
            no_self_ensemble: a.no_self_ensemble,
            no_global: a.no_global,
            no_local: a.no_local,
            ce_only: a.ce_only,
        }
    }
}

/// Network A, network B and data-generation seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub network_a: u64,
    pub network_b: u64,
    pub data: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds { network_a: 1, network_b: 2, data: 0 }
    }
}

impl std::str::FromStr for Seeds {
    type Err = String;

    /// Parses `A,B,data`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let [a, b, d] = parts.as_slice() else {
            return Err(format!("expected three comma-separated seeds, got {s:?}"));
        };
        let parse = |v: &str| v.parse::<u64>().map_err(|e| format!("bad seed {v:?}: {e}"));
        Ok(Seeds { network_a: parse(a)?, network_b: parse(b)?, data: parse(d)? })
    }
}

fn default_sweep() -> Vec<Seeds> {
    (0..3).map(|k| Seeds { network_a: 10 * k + 1, network_b: 10 * k + 2, data: k }).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub out_dir: Option<PathBuf>,
    /// Write per-epoch filter dumps and loss histograms.
    pub dump_filters: bool,
    pub histogram_bins: usize,
    /// Write the final network weights to `checkpoint.json`.
    pub checkpoint: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { out_dir: None, dump_filters: false, histogram_bins: 50, checkpoint: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub noise: NoiseConfig,
    pub training: TrainingConfig,
    pub ablation: AblationFlags,
    pub seeds: Seeds,
    /// Seed triples the ablation sweep runs every row over.
    pub sweep_seeds: Vec<Seeds>,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data: DataConfig::default(),
            noise: NoiseConfig::default(),
            training: TrainingConfig::default(),
            ablation: AblationFlags::default(),
            seeds: Seeds::default(),
            sweep_seeds: default_sweep(),
            output: OutputConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        let d = &self.data;
        if d.train_csv.is_none() && (d.classes < 2 || d.n_train < d.classes) {
            return bad("data: need n_train >= classes >= 2");
        }
        if d.test_csv.is_none() && d.n_test == 0 {
            return bad("data: n_test must be positive");
        }
        if !(0.0..=1.0).contains(&self.noise.gamma) {
            return bad("noise: gamma must lie in [0, 1]");
        }
        if self.output.histogram_bins == 0 {
            return bad("output: histogram_bins must be positive");
        }
        if self.sweep_seeds.is_empty() {
            return bad("sweep_seeds must not be empty");
        }
        self.train_config().validate().map_err(|e| CliError::Config(e.to_string()))?;
        for s in &self.sweep_seeds {
            if s.network_a == s.network_b {
                return bad("sweep_seeds: the two network seeds must differ");
            }
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.training;
        let aug = &t.augmentation;
        TrainConfig {
            total_epochs: t.total_epochs,
            warmup_epochs: t.warmup_epochs,
            batch_size: t.batch_size,
            lr: t.lr,
            lr_decay_per_epoch: t.lr_decay_per_epoch,
            weight_decay: t.weight_decay,
            ema_alpha: t.ema_alpha,
            tau: t.tau,
            lambda_max: t.lambda_max,
            ramp_epochs: t.ramp_epochs,
            t0: t.t0,
            seed_a: self.seeds.network_a,
            seed_b: self.seeds.network_b,
            hidden1: t.hidden1,
            hidden2: t.hidden2,
            proj_hidden: t.proj_hidden,
            proj_dim: t.proj_dim,
            augmentation: AugmentationPolicy {
                gaussian_sigma: aug.gaussian_sigma,
                feature_dropout_prob: aug.feature_dropout_prob,
                scale_range: (aug.scale_range[0], aug.scale_range[1]),
                seed: 0,
            },
            em: EmConfig {
                tol: t.em.tol,
                max_iter: t.em.max_iter,
                variance_floor: t.em.variance_floor,
                init_jitter: t.em.init_jitter,
                seed: 0,
            },
            ablation: self.ablation.into(),
        }
    }

    pub fn with_seeds(&self, seeds: Seeds) -> Self {
        ExperimentConfig { seeds, ..self.clone() }
    }

    fn blob_spec(&self, n: usize, label: u64) -> BlobSpec {
        BlobSpec {
            n,
            classes: self.data.classes,
            dim: self.data.dim,
            separation: self.data.separation,
            seed: seed::derive(self.seeds.data, label),
            class_weights: self.data.class_weights.clone(),
        }
    }

    /// The noisy training set, read or generated.
    pub fn training_set(&self) -> CliResult<Dataset> {
        if let Some(path) = &self.data.train_csv {
            return dataset_csv::read(path, self.data.classes);
        }
        let clean = generate_blobs(&self.blob_spec(self.data.n_train, TRAIN_SET))
            .map_err(|e| CliError::Config(e.to_string()))?;
        let noise = NoiseSpec::new(self.noise.gamma, seed::derive(self.seeds.data, LABEL_NOISE))
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(inject_symmetric_noise(&clean, &noise))
    }

    /// The clean test set, read or generated.
    pub fn test_set(&self) -> CliResult<Dataset> {
        if let Some(path) = &self.data.test_csv {
            return dataset_csv::read(path, self.data.classes);
        }
        generate_blobs(&self.blob_spec(self.data.n_test, TEST_SET)).map_err(|e| CliError::Config(e.to_string()))
    }
}
