//! The `generate`, `train` and `ablate` commands.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use cotrain_core::cotrain::{run_experiment, Ablation, CycleReport, Experiment, Join};
use cotrain_core::data::Dataset;
use cotrain_core::metrics::loss_histogram;

use crate::checkpoint::{Checkpoint, NamedNetwork};
use crate::config::{ExperimentConfig, Seeds};
use crate::dataset_csv;
use crate::error::{CliError, CliResult};
use crate::report::{self, MetricsWriter, Summary};

/// Runs the two jobs of a [`Join`] on scoped threads.
#[derive(Debug, Clone, Copy, Default)]
pub struct Threads;

impl Join for Threads {
    fn join<RA: Send, RB: Send>(
        &self,
        a: impl FnOnce() -> RA + Send,
        b: impl FnOnce() -> RB + Send,
    ) -> (RA, RB) {
        std::thread::scope(|s| {
            let hb = s.spawn(b);
            let ra = a();
            (ra, hb.join().unwrap_or_else(|p| std::panic::resume_unwind(p)))
        })
    }
}

fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

/// One line describing the overall and per-class corruption rates.
pub fn corruption_summary(d: &Dataset) -> String {
    let per_class: Vec<String> = d
        .corruption_rate_per_class()
        .iter()
        .enumerate()
        .map(|(c, r)| format!("class {c}: {r:.3}"))
        .collect();
    format!("{} samples, corruption rate {:.3} ({})", d.len(), d.corruption_rate(), per_class.join(", "))
}

/// Build the noisy training set and write it as CSV.
pub fn generate(config: &ExperimentConfig, out: &Path) -> CliResult<Dataset> {
    let train = config.training_set()?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    dataset_csv::write(&train, out)?;
    Ok(train)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub mode: &'static str,
    pub final_accuracy: f64,
    pub final_selection_auc: Option<f64>,
}

/// Run one experiment and write `metrics.csv`, `summary.json` and, if
/// enabled, `checkpoint.json` and the per-epoch filter dumps.
pub fn train(
    config: &ExperimentConfig,
    out_dir: &Path,
    mut progress: impl FnMut(&CycleReport),
) -> CliResult<TrainResult> {
    let train = config.training_set()?;
    let test = config.test_set()?;
    let train_config = config.train_config();
    let mut experiment = Experiment::new(train_config.clone(), &train, &test).map_err(|e| CliError::Config(e.to_string()))?;

    create_dir(out_dir)?;
    let dumps = out_dir.join("filters");
    if config.output.dump_filters {
        create_dir(&dumps)?;
    }
    let truly_clean = train.truly_clean();
    let mut metrics = MetricsWriter::create(&out_dir.join("metrics.csv"))?;
    let mut last: Option<CycleReport> = None;
    while !experiment.is_done() {
        let result = experiment.step_with(&Threads)?;
        metrics.append(&result.report)?;
        if config.output.dump_filters {
            let epoch = result.report.epoch;
            for (name, outcome) in &result.filters {
                let stem = format!("epoch_{epoch:03}_{name}");
                report::write_filter_dump(outcome, &truly_clean, &dumps.join(format!("{stem}.csv")))?;
                let h = loss_histogram(&outcome.losses, &truly_clean, config.output.histogram_bins)?;
                report::write_histogram(&h, &dumps.join(format!("{stem}_histogram.csv")))?;
            }
        }
        progress(&result.report);
        last = Some(result.report);
    }
    metrics.finish()?;

    let final_accuracy = match &last {
        Some(r) => r.test_accuracy,
        None => experiment.test_accuracy()?,
    };
    let result = TrainResult {
        mode: train_config.ablation.mode(),
        final_accuracy,
        final_selection_auc: last.as_ref().and_then(CycleReport::mean_selection_auc),
    };
    let summary = Summary {
        mode: result.mode,
        epochs: train_config.total_epochs,
        final_accuracy,
        final_selection_auc: result.final_selection_auc,
        train_corruption_rate: train.corruption_rate(),
        seeds: config.seeds,
        config,
    };
    report::write_json(&summary, &out_dir.join("summary.json"))?;

    if config.output.checkpoint {
        let pair = experiment.pair();
        let mut members = vec![&pair.a];
        if train_config.ablation.two_networks() {
            members.push(&pair.b);
        }
        let mut networks = Vec::new();
        for m in members {
            for (role, params) in [("student", m.student()), ("teacher", m.teacher())] {
                networks.push(NamedNetwork {
                    network: m.name().to_string(),
                    role: role.to_string(),
                    params: params.into(),
                });
            }
        }
        let checkpoint = Checkpoint { epoch: experiment.epoch(), networks };
        checkpoint.save(&out_dir.join("checkpoint.json"))?;
    }
    Ok(result)
}

/// Component flags of one ablation row, as reported in the table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Components {
    pub cotrain: bool,
    pub nlf: bool,
    pub self_ensemble: bool,
    pub global: bool,
    pub local: bool,
}

impl From<Ablation> for Components {
    fn from(a: Ablation) -> Self {
        Components {
            cotrain: a.two_networks(),
            nlf: a.uses_filter(),
            self_ensemble: a.self_ensemble(),
            global: !a.ce_only && !a.no_global,
            local: !a.ce_only && !a.no_local,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub name: &'static str,
    pub components: Components,
    /// Final test accuracy per sweep seed, in sweep order.
    pub accuracies: Vec<f64>,
}

impl AblationRow {
    pub fn mean(&self) -> f64 {
        self.accuracies.iter().sum::<f64>() / self.accuracies.len() as f64
    }

    /// Sample standard deviation; zero for a single seed.
    pub fn std(&self) -> f64 {
        let n = self.accuracies.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        let ss: f64 = self.accuracies.iter().map(|a| (a - m) * (a - m)).sum();
        (ss / (n - 1) as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub seeds: Vec<Seeds>,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn to_csv(&self) -> String {
        let mut header = vec!["row", "cotrain", "nlf", "self_ensemble", "global", "local"]
            .into_iter()
            .map(String::from)
            .collect::<Vec<_>>();
        header.extend(self.seeds.iter().map(|s| format!("seed_{}_{}_{}", s.network_a, s.network_b, s.data)));
        header.extend(["mean".to_string(), "std".to_string()]);
        let mut out = header.join(",");
        out.push('\n');
        for r in &self.rows {
            let c = r.components;
            let flags = [c.cotrain, c.nlf, c.self_ensemble, c.global, c.local].map(|f| u8::from(f).to_string());
            let mut cells = vec![r.name.to_string()];
            cells.extend(flags);
            cells.extend(r.accuracies.iter().map(f64::to_string));
            cells.extend([r.mean().to_string(), r.std().to_string()]);
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Run every ablation row over every sweep seed, spreading the runs over
/// the available cores, and write `ablation.csv`.
pub fn ablate(
    config: &ExperimentConfig,
    out_dir: &Path,
    progress: impl Fn(&str, &Seeds, f64) + Sync,
) -> CliResult<AblationTable> {
    let seeds = config.sweep_seeds.clone();
    let sets = seeds
        .iter()
        .map(|s| {
            let c = config.with_seeds(*s);
            Ok((c.training_set()?, c.test_set()?))
        })
        .collect::<CliResult<Vec<_>>>()?;

    let jobs: Vec<(usize, usize)> =
        (0..Ablation::TABLE.len()).flat_map(|r| (0..seeds.len()).map(move |s| (r, s))).collect();
    let results: Mutex<Vec<Option<CliResult<f64>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(row, s)) = jobs.get(k) else { break };
                let (name, ablation) = Ablation::TABLE[row];
                let mut c = config.with_seeds(seeds[s]);
                c.ablation = ablation.into();
                let (train, test) = &sets[s];
                let outcome = run_experiment(&c.train_config(), train, test)
                    .map(|r| r.final_accuracy)
                    .map_err(CliError::from);
                if let Ok(acc) = &outcome {
                    progress(name, &seeds[s], *acc);
                }
                results.lock().expect("no worker panicked")[k] = Some(outcome);
            });
        }
    });

    let mut results = results.into_inner().expect("no worker panicked").into_iter();
    let mut rows = Vec::new();
    for (name, ablation) in Ablation::TABLE {
        let accuracies = (&mut results)
            .take(seeds.len())
            .map(|r| r.expect("every job ran"))
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push(AblationRow { name, components: ablation.into(), accuracies });
    }
    let table = AblationTable { seeds, rows };
    create_dir(out_dir)?;
    let path = out_dir.join("ablation.csv");
    std::fs::write(&path, table.to_csv()).map_err(|e| CliError::io(&path, e))?;
    Ok(table)
}
