//! Classification accuracy and clean-sample selection quality.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.is_empty() || predicted.len() != truth.len() {
        return Err(Error::invalid("accuracy needs equal, nonempty label lists"));
    }
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / predicted.len() as f64)
}

/// Area under the ROC curve as the Mann-Whitney statistic: the chance that
/// a random positive outscores a random negative, ties counting one half.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(Error::invalid("one label per score required"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("scores must not be NaN"));
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::invalid("AUC needs both positive and negative samples"));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of (1-based, tie-averaged) ranks of the positives, doubled to stay integral.
    let mut twice_rank_sum: u64 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let twice_avg_rank = (start + 1 + end) as u64;
        let pos_in_group = order[start..end].iter().filter(|&&i| positive[i]).count() as u64;
        twice_rank_sum += twice_avg_rank * pos_in_group;
        start = end;
    }
    let n_pos = n_pos as u64;
    // 2 * U = 2 * R - n_pos (n_pos + 1)
    let twice_u = twice_rank_sum - n_pos * (n_pos + 1);
    Ok(twice_u as f64 / (2 * n_pos * n_neg as u64) as f64)
}

/// Per-sample view of one filtering pass.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRecord {
    pub posteriors: Vec<f64>,
    pub truly_clean: Vec<bool>,
    pub selected: Vec<bool>,
}

impl SelectionRecord {
    pub fn new(posteriors: Vec<f64>, truly_clean: Vec<bool>, selected: Vec<bool>) -> Result<Self> {
        if posteriors.len() != truly_clean.len() || selected.len() != truly_clean.len() {
            return Err(Error::invalid("selection record fields differ in length"));
        }
        Ok(SelectionRecord { posteriors, truly_clean, selected })
    }

    pub fn selected_count(&self) -> usize {
        self.selected.iter().filter(|&&s| s).count()
    }

    /// AUC of the posterior against true cleanliness; `None` when only
    /// one population is present.
    pub fn auc(&self) -> Option<f64> {
        roc_auc(&self.posteriors, &self.truly_clean).ok()
    }
}

/// Precision and recall of the selected set as a detector of truly clean
/// samples; `None` where the denominator is empty.
pub fn selection_precision_recall(record: &SelectionRecord) -> (Option<f64>, Option<f64>) {
    let selected = record.selected_count();
    let clean = record.truly_clean.iter().filter(|&&c| c).count();
    let hits = record
        .selected
        .iter()
        .zip(&record.truly_clean)
        .filter(|(&s, &c)| s && c)
        .count();
    let ratio = |d: usize| (d > 0).then(|| hits as f64 / d as f64);
    (ratio(selected), ratio(clean))
}

/// Loss counts for the clean and noisy populations over shared bins.
#[derive(Debug, Clone, PartialEq)]
pub struct LossHistogram {
    /// `n_bins + 1` edges spanning `[0, max loss]`.
    pub edges: Vec<f64>,
    pub clean: Vec<usize>,
    pub noisy: Vec<usize>,
}

/// Bin `losses` into `n_bins` equal bins over `[0, max]`, separately for
/// samples flagged truly clean and the rest. The maximum falls in the
/// last bin.
pub fn loss_histogram(losses: &[f64], truly_clean: &[bool], n_bins: usize) -> Result<LossHistogram> {
    if losses.len() != truly_clean.len() {
        return Err(Error::invalid("one flag per loss required"));
    }
    if n_bins == 0 {
        return Err(Error::invalid("need at least one bin"));
    }
    if losses.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
        return Err(Error::invalid("losses must be finite and nonnegative"));
    }
    let max = losses.iter().copied().fold(0.0, f64::max);
    let width = max / n_bins as f64;
    let edges = (0..=n_bins).map(|k| if k == n_bins { max } else { k as f64 * width }).collect();
    let mut clean = vec![0; n_bins];
    let mut noisy = vec![0; n_bins];
    for (&l, &c) in losses.iter().zip(truly_clean) {
        let bin = if width > 0.0 { ((l / width) as usize).min(n_bins - 1) } else { 0 };
        if c {
            clean[bin] += 1;
        } else {
            noisy[bin] += 1;
        }
    }
    Ok(LossHistogram { edges, clean, noisy })
}

/// Per-epoch `|count_a - count_b|`.
pub fn selection_variation(counts_a: &[usize], counts_b: &[usize]) -> Result<Vec<usize>> {
    if counts_a.len() != counts_b.len() {
        return Err(Error::invalid("count series differ in length"));
    }
    Ok(counts_a.iter().zip(counts_b).map(|(&a, &b)| a.abs_diff(b)).collect())
}
