//! Run outputs: the long-format metrics series, the JSON summary, filter
//! dumps and loss histograms.

use std::io::Write;
use std::path::Path;

use cotrain_core::cotrain::CycleReport;
use cotrain_core::filter::FilterOutcome;
use cotrain_core::metrics::LossHistogram;
use serde::Serialize;

use crate::config::{ExperimentConfig, Seeds};
use crate::error::{CliError, CliResult};

/// Written for values that are undefined at an epoch, such as the
/// threshold during warm-up or precision of an empty selection.
pub const UNDEFINED: &str = "NA";

/// Network column for metrics that belong to the pair.
pub const PAIR: &str = "pair";

fn value(v: Option<f64>) -> String {
    v.map_or_else(|| UNDEFINED.to_string(), |v| v.to_string())
}

/// One metrics row: `(metric, network, value)`.
pub type MetricRow = (&'static str, String, String);

pub fn metric_rows(r: &CycleReport) -> Vec<MetricRow> {
    let pair = || PAIR.to_string();
    let mut rows = vec![
        ("test_accuracy", pair(), value(Some(r.test_accuracy))),
        ("lambda", pair(), value(Some(r.lambda))),
        ("threshold", pair(), value(r.threshold)),
        ("selection_variation", pair(), value(r.selection_variation.map(|v| v as f64))),
    ];
    for n in &r.networks {
        let name = || n.name.to_string();
        let l = &n.losses;
        rows.extend([
            ("loss_ce", name(), value(Some(l.terms.ce))),
            ("loss_con", name(), value(Some(l.terms.con))),
            ("loss_global", name(), value(Some(l.terms.global))),
            ("loss_local", name(), value(Some(l.terms.local))),
            ("loss_total", name(), value(Some(l.total))),
            ("learning_rate", name(), value(Some(l.lr))),
            ("selected_clean", name(), value(n.selected_clean.map(|v| v as f64))),
            ("selection_auc", name(), value(n.selection_auc)),
            ("selection_precision", name(), value(n.selection_precision)),
            ("selection_recall", name(), value(n.selection_recall)),
        ]);
    }
    rows
}

/// Streams `epoch,metric,network,value` rows to a file.
pub struct MetricsWriter {
    inner: csv::Writer<std::io::BufWriter<std::fs::File>>,
    path: std::path::PathBuf,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> CliResult<Self> {
        let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut inner = csv::Writer::from_writer(std::io::BufWriter::new(file));
        inner
            .write_record(["epoch", "metric", "network", "value"])
            .map_err(|e| CliError::format(path, e))?;
        Ok(MetricsWriter { inner, path: path.to_path_buf() })
    }

    pub fn append(&mut self, report: &CycleReport) -> CliResult<()> {
        let epoch = report.epoch.to_string();
        for (metric, network, v) in metric_rows(report) {
            self.inner
                .write_record([epoch.as_str(), metric, &network, &v])
                .map_err(|e| CliError::format(&self.path, e))?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> CliResult<()> {
        self.inner.flush().map_err(|e| CliError::io(&self.path, e))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary<'a> {
    pub mode: &'a str,
    pub epochs: usize,
    pub final_accuracy: f64,
    /// Mean selection AUC of the networks at the last epoch.
    pub final_selection_auc: Option<f64>,
    pub train_corruption_rate: f64,
    pub seeds: Seeds,
    pub config: &'a ExperimentConfig,
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::format(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// `index,loss,loss_norm,w,is_clean_flag,is_truly_clean`, one row per
/// training sample.
pub fn write_filter_dump(outcome: &FilterOutcome, truly_clean: &[bool], path: &Path) -> CliResult<()> {
    let err = |e: csv::Error| CliError::format(path, e);
    let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    w.write_record(["index", "loss", "loss_norm", "w", "is_clean_flag", "is_truly_clean"]).map_err(err)?;
    let flags = outcome.division.clean_mask(outcome.losses.len());
    for i in 0..outcome.losses.len() {
        w.write_record([
            i.to_string(),
            outcome.losses[i].to_string(),
            outcome.normalized[i].to_string(),
            outcome.division.posteriors()[i].to_string(),
            u8::from(flags[i]).to_string(),
            u8::from(truly_clean[i]).to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// `bin_start,bin_end,clean,noisy`.
pub fn write_histogram(h: &LossHistogram, path: &Path) -> CliResult<()> {
    let mut out = String::from("bin_start,bin_end,clean,noisy\n");
    for k in 0..h.clean.len() {
        out.push_str(&format!("{},{},{},{}\n", h.edges[k], h.edges[k + 1], h.clean[k], h.noisy[k]));
    }
    let mut f = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| CliError::io(path, e))
}
