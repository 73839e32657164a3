//! Co-training of two student/teacher networks with cross-fed divisions.
//!
//! One cycle, after warm-up:
//!
//! 1. each teacher scores the whole training set and the noisy label filter
//!    splits it into clean and noisy indices;
//! 2. the divisions are swapped, so network A trains on B's split and
//!    vice versa;
//! 3. each student takes one pass of optimizer steps over its split while
//!    its teacher follows by EMA after every step;
//! 4. the averaged teacher prediction is evaluated on the test set.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::{self, AugmentationPolicy, Dataset};
use crate::error::{Error, Result};
use crate::filter::{self, Division, EmConfig, FilterOutcome};
use crate::losses::{self, ActiveTerms, BatchTargets, LossTerms, LossWeights};
use crate::matrix::Matrix;
use crate::metrics::{self, SelectionRecord};
use crate::model::{ema_update, Adam, AdamConfig, Architecture, NetworkParams};
use crate::seed::Stream;

/// Switches for the ablation study. All false is the full method.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Ablation {
    /// Train only network A, filtered by its own teacher.
    pub single_network: bool,
    /// Keep the teacher equal to the student; drops the consistency term.
    pub no_self_ensemble: bool,
    pub no_global: bool,
    pub no_local: bool,
    /// Plain cross-entropy on every sample with a single network.
    pub ce_only: bool,
}

impl Ablation {
    pub const FULL: Ablation = Ablation {
        single_network: false,
        no_self_ensemble: false,
        no_global: false,
        no_local: false,
        ce_only: false,
    };
    pub const BASELINE: Ablation = Ablation { ce_only: true, ..Ablation::FULL };

    /// The six component combinations of the ablation table, in order.
    pub const TABLE: [(&'static str, Ablation); 6] = [
        ("baseline", Ablation::BASELINE),
        (
            "cotrain_nlf",
            Ablation { no_self_ensemble: true, no_global: true, no_local: true, ..Ablation::FULL },
        ),
        ("self_ensemble", Ablation { no_global: true, no_local: true, ..Ablation::FULL }),
        ("global", Ablation { no_local: true, ..Ablation::FULL }),
        ("local", Ablation { no_global: true, ..Ablation::FULL }),
        ("full", Ablation::FULL),
    ];

    pub fn two_networks(&self) -> bool {
        !(self.single_network || self.ce_only)
    }

    pub fn uses_filter(&self) -> bool {
        !self.ce_only
    }

    pub fn self_ensemble(&self) -> bool {
        !(self.no_self_ensemble || self.ce_only)
    }

    fn terms(&self) -> ActiveTerms {
        if self.ce_only {
            return ActiveTerms::CE_ONLY;
        }
        ActiveTerms {
            ce: true,
            con: self.self_ensemble(),
            global: !self.no_global,
            local: !self.no_local,
        }
    }

    /// Short run-mode name used in reports.
    pub fn mode(&self) -> &'static str {
        if self.ce_only {
            "baseline_ce"
        } else if *self == Ablation::FULL {
            "full"
        } else {
            "ablation"
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Epochs including warm-up.
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
    /// Initial filter threshold: 0.9 for balanced data, 0.8 otherwise.
    pub t0: f64,
    pub seed_a: u64,
    pub seed_b: u64,
    pub hidden1: usize,
    pub hidden2: usize,
    pub proj_hidden: usize,
    pub proj_dim: usize,
    pub augmentation: AugmentationPolicy,
    pub em: EmConfig,
    pub ablation: Ablation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            total_epochs: 60,
            warmup_epochs: 5,
            batch_size: 32,
            lr: 1e-3,
            lr_decay_per_epoch: 0.9,
            weight_decay: 1e-4,
            ema_alpha: 0.99,
            tau: 0.5,
            lambda_max: 10.0,
            ramp_epochs: 10,
            t0: 0.9,
            seed_a: 1,
            seed_b: 2,
            hidden1: 64,
            hidden2: 64,
            proj_hidden: 64,
            proj_dim: 32,
            augmentation: AugmentationPolicy::default(),
            em: EmConfig::default(),
            ablation: Ablation::FULL,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(m));
        if self.seed_a == self.seed_b {
            return bad("the two networks need different seeds");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if !(self.lr > 0.0) || !(self.lr_decay_per_epoch > 0.0 && self.lr_decay_per_epoch <= 1.0) {
            return bad("learning rate must be positive and its decay in (0, 1]");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight decay must be nonnegative");
        }
        if !(0.0..=1.0).contains(&self.ema_alpha) {
            return bad("EMA decay must lie in [0, 1]");
        }
        if !(self.tau > 0.0) {
            return bad("temperature must be positive");
        }
        if !(self.lambda_max >= 0.0) {
            return bad("lambda_max must be nonnegative");
        }
        if !(0.5..=1.0).contains(&self.t0) {
            return bad("initial threshold must lie in [0.5, 1]");
        }
        if self.warmup_epochs > self.total_epochs {
            return bad("warm-up cannot exceed the total epoch count");
        }
        self.augmentation.validate()
    }

    pub fn architecture(&self, input_dim: usize, classes: usize) -> Architecture {
        Architecture {
            input_dim,
            hidden1: self.hidden1,
            hidden2: self.hidden2,
            classes,
            proj_hidden: self.proj_hidden,
            proj_dim: self.proj_dim,
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            warmup_epochs: self.warmup_epochs,
            ramp_epochs: self.ramp_epochs,
            lambda_max: self.lambda_max,
        }
    }

    pub fn lambda(&self, epoch: usize) -> f64 {
        losses::lambda_schedule(epoch, &self.loss_weights())
    }

    /// Filter threshold at `epoch`; `None` during warm-up.
    pub fn threshold(&self, epoch: usize) -> Result<Option<f64>> {
        if epoch < self.warmup_epochs {
            return Ok(None);
        }
        filter::threshold_schedule(epoch - self.warmup_epochs, self.t0).map(Some)
    }

    pub fn learning_rate(&self, epoch: usize) -> f64 {
        self.lr * libm::pow(self.lr_decay_per_epoch, epoch as f64)
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig { weight_decay: self.weight_decay, ..AdamConfig::default() }
    }

    fn ema_decay(&self) -> f64 {
        if self.ablation.self_ensemble() {
            self.ema_alpha
        } else {
            0.0
        }
    }
}

/// One student/teacher network with its own optimizer and random stream.
#[derive(Debug, Clone)]
pub struct Member {
    name: char,
    seed: u64,
    student: NetworkParams,
    teacher: NetworkParams,
    optimizer: Adam,
    augment_rng: Stream,
    ema_updates: u64,
}

impl Member {
    pub fn new(name: char, arch: Architecture, seed: u64, config: &TrainConfig) -> Result<Self> {
        let student = NetworkParams::init(arch, seed)?;
        Ok(Member {
            name,
            seed,
            teacher: student.clone(),
            optimizer: Adam::new(&student, config.adam()),
            augment_rng: config.augmentation.stream(seed),
            student,
            ema_updates: 0,
        })
    }

    pub fn name(&self) -> char {
        self.name
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn student(&self) -> &NetworkParams {
        &self.student
    }

    /// The teacher is only ever written by the EMA update.
    pub fn teacher(&self) -> &NetworkParams {
        &self.teacher
    }

    pub fn optimizer_steps(&self) -> u64 {
        self.optimizer.steps()
    }

    pub fn ema_updates(&self) -> u64 {
        self.ema_updates
    }

    fn ema(&mut self, alpha: f64) -> Result<()> {
        ema_update(&mut self.teacher, &self.student, alpha)?;
        self.ema_updates += 1;
        Ok(())
    }
}

/// Networks A and B.
#[derive(Debug, Clone)]
pub struct NetworkPair {
    pub a: Member,
    pub b: Member,
}

impl NetworkPair {
    pub fn new(config: &TrainConfig, input_dim: usize, classes: usize) -> Result<Self> {
        config.validate()?;
        let arch = config.architecture(input_dim, classes);
        Ok(NetworkPair {
            a: Member::new('A', arch, config.seed_a, config)?,
            b: Member::new('B', arch, config.seed_b, config)?,
        })
    }
}

/// Runs two independent jobs, possibly in parallel.
///
/// Both jobs only touch their own network, so any implementation yields
/// the same results.
pub trait Join {
    fn join<RA: Send, RB: Send>(
        &self,
        a: impl FnOnce() -> RA + Send,
        b: impl FnOnce() -> RB + Send,
    ) -> (RA, RB);
}

/// Runs jobs one after the other.
#[derive(Debug, Clone, Copy, Default)]
pub struct Serial;

impl Join for Serial {
    fn join<RA: Send, RB: Send>(
        &self,
        a: impl FnOnce() -> RA + Send,
        b: impl FnOnce() -> RB + Send,
    ) -> (RA, RB) {
        (a(), b())
    }
}

/// Mean loss terms over one epoch of a single network.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EpochLosses {
    pub terms: LossTerms,
    pub total: f64,
    pub batches: usize,
    pub lambda: f64,
    pub lr: f64,
}

/// One pass over the training set for one network.
///
/// Per batch: two augmented views, student forward on the first, teacher
/// forward on the second, one optimizer step on the student and one EMA
/// update of the teacher. CE sees only the division's clean samples, the
/// contrastive loss only its noisy ones.
pub fn train_epoch(
    member: &mut Member,
    division: &Division,
    dataset: &Dataset,
    epoch: usize,
    config: &TrainConfig,
) -> Result<EpochLosses> {
    let n = dataset.len();
    if division.len() != n || division.indices().iter().enumerate().any(|(k, &i)| k != i) {
        return Err(Error::invalid("division does not partition the dataset"));
    }
    let ablation = config.ablation;
    let clean_mask = if ablation.ce_only { vec![true; n] } else { division.clean_mask(n) };
    let labels = dataset.observed_labels();
    let terms = ablation.terms();
    let lambda = config.lambda(epoch);
    let lr = config.learning_rate(epoch);
    let alpha = config.ema_decay();
    let unsupervised = lambda != 0.0 && (terms.con || terms.global || terms.local);

    let order = data::batches(n, config.batch_size, data::epoch_shuffle_seed(member.seed, epoch))?;
    let mut stats = EpochLosses { lambda, lr, ..Default::default() };
    let name = member.name;
    for (batch_no, idx) in order.iter().enumerate() {
        let wrap = |e: Error| Error::Training {
            epoch,
            batch: batch_no,
            network: name,
            source: alloc::boxed::Box::new(e),
        };
        let view1 = data::augment_batch(dataset, idx, &config.augmentation, &mut member.augment_rng);
        let teacher_out = if ablation.ce_only {
            None
        } else {
            let view2 = data::augment_batch(dataset, idx, &config.augmentation, &mut member.augment_rng);
            if unsupervised {
                Some(member.teacher.forward(&view2).map_err(wrap)?)
            } else {
                None
            }
        };
        let batch_labels: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        let batch_clean: Vec<bool> = idx.iter().map(|&i| clean_mask[i]).collect();
        let targets = BatchTargets {
            labels: &batch_labels,
            clean: &batch_clean,
            teacher: teacher_out.as_ref(),
            lambda,
            tau: config.tau,
            terms,
        };
        let (loss, grads) = losses::gradients(&member.student, &view1, &targets).map_err(wrap)?;
        member.optimizer.step(&mut member.student, &grads, lr).map_err(wrap)?;
        member.ema(alpha).map_err(wrap)?;

        stats.terms.ce += loss.terms.ce;
        stats.terms.con += loss.terms.con;
        stats.terms.global += loss.terms.global;
        stats.terms.local += loss.terms.local;
        stats.total += loss.total;
        stats.batches += 1;
    }
    let k = stats.batches.max(1) as f64;
    stats.terms.ce /= k;
    stats.terms.con /= k;
    stats.terms.global /= k;
    stats.terms.local /= k;
    stats.total /= k;
    Ok(stats)
}

/// Warm-up: every network trains on all samples with CE for
/// `warmup_epochs` epochs.
pub fn warmup(pair: &mut NetworkPair, dataset: &Dataset, config: &TrainConfig) -> Result<()> {
    let all = Division::uniform(&(0..dataset.len()).collect::<Vec<_>>(), true);
    for epoch in 0..config.warmup_epochs {
        train_epoch(&mut pair.a, &all, dataset, epoch, config)?;
        if config.ablation.two_networks() {
            train_epoch(&mut pair.b, &all, dataset, epoch, config)?;
        }
    }
    Ok(())
}

/// Score the training set with the member's teacher and split it.
pub fn filter_step(member: &Member, dataset: &Dataset, epoch: usize, config: &TrainConfig) -> Result<FilterOutcome> {
    let threshold = config
        .threshold(epoch)?
        .ok_or_else(|| Error::invalid("no filtering during warm-up"))?;
    let losses = filter::per_sample_losses(&member.teacher, dataset)?;
    let em = EmConfig { seed: member.seed ^ epoch as u64, ..config.em };
    filter::filter_losses(&losses, threshold, &em)
}

/// Swap divisions: A trains on B's split and B on A's.
pub fn cross_feed(division_a: &Division, division_b: &Division) -> Result<(Division, Division)> {
    if division_a.indices() != division_b.indices() {
        return Err(Error::invalid("divisions cover different index sets"));
    }
    Ok((division_b.clone(), division_a.clone()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probs: Matrix,
    pub labels: Vec<usize>,
}

/// Average of the teachers' softmax outputs; ties go to the lowest class.
pub fn predict(teachers: &[&NetworkParams], x: &Matrix) -> Result<Prediction> {
    let (first, rest) = teachers
        .split_first()
        .ok_or_else(|| Error::invalid("need at least one teacher"))?;
    let mut probs = losses::softmax_rows(&first.forward(x)?.logits);
    for t in rest {
        let p = losses::softmax_rows(&t.forward(x)?.logits);
        for (a, b) in probs.as_mut_slice().iter_mut().zip(p.as_slice()) {
            *a += b;
        }
    }
    let k = teachers.len() as f64;
    probs.as_mut_slice().iter_mut().for_each(|v| *v /= k);
    let labels = probs
        .iter_rows()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (c, &v)| if v > best.1 { (c, v) } else { best })
                .0
        })
        .collect();
    Ok(Prediction { probs, labels })
}

/// Per-network part of a [`CycleReport`].
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkReport {
    pub name: char,
    pub losses: EpochLosses,
    /// Clean count of the division this network's teacher produced.
    pub selected_clean: Option<usize>,
    pub selection_auc: Option<f64>,
    pub selection_precision: Option<f64>,
    pub selection_recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleReport {
    pub epoch: usize,
    pub lambda: f64,
    pub threshold: Option<f64>,
    pub networks: Vec<NetworkReport>,
    pub test_accuracy: f64,
    /// `|selected_A - selected_B|` when both networks filtered.
    pub selection_variation: Option<usize>,
}

impl CycleReport {
    /// Mean selection AUC over the networks that filtered this epoch.
    pub fn mean_selection_auc(&self) -> Option<f64> {
        let aucs: Vec<f64> = self.networks.iter().filter_map(|n| n.selection_auc).collect();
        (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64)
    }
}

/// Everything an epoch produced, including the raw filter outcomes.
#[derive(Debug, Clone)]
pub struct EpochResult {
    pub report: CycleReport,
    /// Filter outcome per network, in network order.
    pub filters: Vec<(char, FilterOutcome)>,
    /// The division each network trained on.
    pub trained_on: Vec<(char, Division)>,
}

/// Stepwise driver for a full run.
#[derive(Debug, Clone)]
pub struct Experiment<'d> {
    config: TrainConfig,
    train: &'d Dataset,
    test: &'d Dataset,
    pair: NetworkPair,
    test_x: Matrix,
    epoch: usize,
}

impl<'d> Experiment<'d> {
    pub fn new(config: TrainConfig, train: &'d Dataset, test: &'d Dataset) -> Result<Self> {
        config.validate()?;
        if train.dim() != test.dim() || train.classes() != test.classes() {
            return Err(Error::invalid("train and test sets differ in shape"));
        }
        if train.is_empty() || test.is_empty() {
            return Err(Error::invalid("train and test sets must be nonempty"));
        }
        let pair = NetworkPair::new(&config, train.dim(), train.classes())?;
        Ok(Experiment { test_x: test.features(), config, train, test, pair, epoch: 0 })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn pair(&self) -> &NetworkPair {
        &self.pair
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn is_done(&self) -> bool {
        self.epoch >= self.config.total_epochs
    }

    fn teachers(&self) -> Vec<&NetworkParams> {
        if self.config.ablation.two_networks() {
            vec![self.pair.a.teacher(), self.pair.b.teacher()]
        } else {
            vec![self.pair.a.teacher()]
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Prediction> {
        predict(&self.teachers(), x)
    }

    pub fn test_accuracy(&self) -> Result<f64> {
        let p = self.predict(&self.test_x)?;
        metrics::accuracy(&p.labels, &self.test.clean_labels())
    }

    /// Run the next epoch serially.
    pub fn step(&mut self) -> Result<EpochResult> {
        self.step_with(&Serial)
    }

    /// Run the next epoch, handing per-network work to `join`.
    pub fn step_with(&mut self, join: &impl Join) -> Result<EpochResult> {
        if self.is_done() {
            return Err(Error::invalid("experiment already finished"));
        }
        let epoch = self.epoch;
        let config = &self.config;
        let train = self.train;
        let ablation = config.ablation;
        let n = train.len();
        let all: Vec<usize> = (0..n).collect();
        let two = ablation.two_networks();
        let threshold = config.threshold(epoch)?;
        let filtering = threshold.is_some() && ablation.uses_filter();

        let (a, b) = (&mut self.pair.a, &mut self.pair.b);
        let mut filters: Vec<(char, FilterOutcome)> = Vec::new();
        let (div_a, div_b) = if filtering {
            let (fa, fb) = join.join(
                || filter_step(a, train, epoch, config),
                || two.then(|| filter_step(b, train, epoch, config)),
            );
            let fa = fa?;
            match fb.transpose()? {
                Some(fb) => {
                    let (for_a, for_b) = cross_feed(&fa.division, &fb.division)?;
                    filters.push(('A', fa));
                    filters.push(('B', fb));
                    (for_a, Some(for_b))
                }
                None => {
                    let own = fa.division.clone();
                    filters.push(('A', fa));
                    (own, None)
                }
            }
        } else {
            let everything = Division::uniform(&all, true);
            (everything.clone(), two.then_some(everything))
        };

        let (la, lb) = join.join(
            || train_epoch(a, &div_a, train, epoch, config),
            || div_b.as_ref().map(|d| train_epoch(b, d, train, epoch, config)),
        );
        let la = la?;
        let lb = lb.transpose()?;

        let mut trained_on = vec![('A', div_a)];
        if let Some(d) = div_b {
            trained_on.push(('B', d));
        }

        let truly_clean = train.truly_clean();
        let mut networks = vec![];
        for (name, losses) in core::iter::once(('A', la)).chain(lb.map(|l| ('B', l))) {
            let outcome = filters.iter().find(|(n, _)| *n == name).map(|(_, o)| o);
            let mut report = NetworkReport {
                name,
                losses,
                selected_clean: None,
                selection_auc: None,
                selection_precision: None,
                selection_recall: None,
            };
            if let Some(o) = outcome {
                let record = SelectionRecord::new(
                    o.division.posteriors().to_vec(),
                    truly_clean.clone(),
                    o.division.clean_mask(n),
                )?;
                let (precision, recall) = metrics::selection_precision_recall(&record);
                report.selected_clean = Some(record.selected_count());
                report.selection_auc = record.auc();
                report.selection_precision = precision;
                report.selection_recall = recall;
            }
            networks.push(report);
        }
        let selection_variation = match networks.as_slice() {
            [x, y] => match (x.selected_clean, y.selected_clean) {
                (Some(p), Some(q)) => Some(p.abs_diff(q)),
                _ => None,
            },
            _ => None,
        };

        self.epoch += 1;
        let report = CycleReport {
            epoch,
            lambda: self.config.lambda(epoch),
            threshold: if filtering { threshold } else { None },
            networks,
            test_accuracy: self.test_accuracy()?,
            selection_variation,
        };
        Ok(EpochResult { report, filters, trained_on })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub mode: &'static str,
    pub epochs: Vec<CycleReport>,
    pub final_accuracy: f64,
    /// Mean selection AUC of the networks at the last epoch.
    pub final_selection_auc: Option<f64>,
}

/// Warm-up followed by filtered co-training, returning per-epoch reports.
pub fn run_experiment(config: &TrainConfig, train: &Dataset, test: &Dataset) -> Result<ExperimentReport> {
    run_experiment_with(config, train, test, &Serial)
}

pub fn run_experiment_with(
    config: &TrainConfig,
    train: &Dataset,
    test: &Dataset,
    join: &impl Join,
) -> Result<ExperimentReport> {
    let mut exp = Experiment::new(config.clone(), train, test)?;
    let mut epochs = Vec::with_capacity(config.total_epochs);
    while !exp.is_done() {
        epochs.push(exp.step_with(join)?.report);
    }
    let final_accuracy = match epochs.last() {
        Some(r) => r.test_accuracy,
        None => exp.test_accuracy()?,
    };
    let final_selection_auc = epochs.last().and_then(CycleReport::mean_selection_auc);
    Ok(ExperimentReport { mode: config.ablation.mode(), epochs, final_accuracy, final_selection_auc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_blobs, inject_symmetric_noise, BlobSpec, NoiseSpec};

    fn small_config() -> TrainConfig {
        TrainConfig {
            total_epochs: 8,
            warmup_epochs: 2,
            batch_size: 16,
            hidden1: 16,
            hidden2: 16,
            proj_hidden: 16,
            proj_dim: 8,
            ..TrainConfig::default()
        }
    }

    fn sets(gamma: f64) -> (Dataset, Dataset) {
        let train = generate_blobs(&BlobSpec::balanced(200, 2, 2, 6.0, 3)).unwrap();
        let train = inject_symmetric_noise(&train, &NoiseSpec::new(gamma, 4).unwrap());
        let test = generate_blobs(&BlobSpec::balanced(100, 2, 2, 6.0, 5)).unwrap();
        (train, test)
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { seed_b: 1, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { t0: 0.3, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..TrainConfig::default() }.validate().is_err());
    }

    #[test]
    fn cross_feed_swaps() {
        let idx: Vec<usize> = (0..4).collect();
        let all_clean = Division::uniform(&idx, true);
        let all_noisy = Division::uniform(&idx, false);
        let (for_a, for_b) = cross_feed(&all_clean, &all_noisy).unwrap();
        assert_eq!(for_a, all_noisy);
        assert_eq!(for_b, all_clean);
        let (x, y) = cross_feed(&all_noisy, &all_clean).unwrap();
        assert_eq!((y, x), (for_a, for_b));
        let (p, q) = cross_feed(&all_clean, &all_clean).unwrap();
        assert_eq!(p, q);

        let other = Division::uniform(&[0, 1, 2], true);
        assert!(cross_feed(&all_clean, &other).is_err());
    }

    #[test]
    fn predict_averages_and_breaks_ties_low() {
        // zero networks predict uniformly
        let t = NetworkParams::zeros(Architecture::new(2, 2));
        let p = predict(&[&t, &t], &Matrix::zeros(3, 2)).unwrap();
        assert!(p.probs.as_slice().iter().all(|&v| v == 0.5));
        assert_eq!(p.labels, vec![0, 0, 0]);
    }

    #[test]
    fn all_noisy_division_has_no_ce() {
        let (train, _) = sets(0.4);
        let config = TrainConfig { warmup_epochs: 0, ..small_config() };
        let mut m = Member::new('A', config.architecture(2, 2), 1, &config).unwrap();
        let idx: Vec<usize> = (0..train.len()).collect();
        let stats = train_epoch(&mut m, &Division::uniform(&idx, false), &train, 12, &config).unwrap();
        assert_eq!(stats.terms.ce, 0.0);
        assert!(stats.terms.local > 0.0);
    }

    #[test]
    fn teacher_frozen_when_alpha_is_one() {
        let (train, _) = sets(0.2);
        let config = TrainConfig { ema_alpha: 1.0, ..small_config() };
        let mut m = Member::new('A', config.architecture(2, 2), 1, &config).unwrap();
        let before = m.teacher().clone();
        let idx: Vec<usize> = (0..train.len()).collect();
        train_epoch(&mut m, &Division::uniform(&idx, true), &train, 0, &config).unwrap();
        assert_eq!(m.teacher(), &before);
        assert_ne!(m.student(), &before);
        assert_eq!(m.ema_updates(), m.optimizer_steps());
    }

    #[test]
    fn warmup_separates_networks() {
        let (train, _) = sets(0.0);
        let config = small_config();
        let mut pair = NetworkPair::new(&config, 2, 2).unwrap();
        warmup(&mut pair, &train, &config).unwrap();
        assert_ne!(pair.a.student(), pair.b.student());
        assert_eq!(pair.a.optimizer_steps(), 2 * 13);
    }

    #[test]
    fn experiment_is_deterministic() {
        let (train, test) = sets(0.4);
        let config = small_config();
        let a = run_experiment(&config, &train, &test).unwrap();
        let b = run_experiment(&config, &train, &test).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.epochs.len(), 8);
        assert!(a.epochs[..2].iter().all(|r| r.threshold.is_none()));
        assert_eq!(a.epochs[2].threshold, Some(0.9));
        assert!(a.final_selection_auc.is_some());
    }
}
