//! Classification metrics with Malignant as the positive class, and
//! percentile-bootstrap confidence intervals.

mod bootstrap;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use bootstrap::{bootstrap_ci, bootstrap_distribution, percentile, BootstrapConfig, BootstrapSamples};

use crate::dataset::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub fp: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fn_ + self.tn + self.fp
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }

    fn add(&mut self, truth: Label, pred: Label) {
        match (truth, pred) {
            (Label::Malignant, Label::Malignant) => self.tp += 1,
            (Label::Malignant, Label::Benign) => self.fn_ += 1,
            (Label::Benign, Label::Benign) => self.tn += 1,
            (Label::Benign, Label::Malignant) => self.fp += 1,
        }
    }

    /// Balanced accuracy where an absent class contributes recall 0.
    /// Used for cross-validation folds that lack one class.
    pub fn lenient_balanced_accuracy(&self) -> f64 {
        let recall = |hit: u64, n: u64| if n == 0 { 0.0 } else { hit as f64 / n as f64 };
        0.5 * (recall(self.tp, self.positives()) + recall(self.tn, self.negatives()))
    }
}

pub fn confusion(truth: &[Label], pred: &[Label]) -> Result<ConfusionMatrix> {
    if truth.len() != pred.len() {
        return Err(Error::InvalidInput(format!(
            "{} true labels but {} predictions",
            truth.len(),
            pred.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::InvalidInput("no labels to compare".into()));
    }
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in truth.iter().zip(pred) {
        cm.add(t, p);
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub balanced_accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

pub fn classification_metrics(cm: &ConfusionMatrix) -> Result<ClassificationMetrics> {
    if cm.positives() == 0 || cm.negatives() == 0 {
        return Err(Error::SingleClass(format!(
            "metrics need both classes ({} malignant, {} benign)",
            cm.positives(),
            cm.negatives()
        )));
    }
    let sensitivity = cm.tp as f64 / cm.positives() as f64;
    let specificity = cm.tn as f64 / cm.negatives() as f64;
    Ok(ClassificationMetrics {
        balanced_accuracy: (sensitivity + specificity) / 2.0,
        sensitivity,
        specificity,
    })
}

/// 1-based ranks with ties sharing their mean rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Area under the ROC curve in its Mann-Whitney form,
/// `P(s_pos > s_neg) + P(s_pos = s_neg) / 2`, computed from midranks.
pub fn auroc(truth: &[Label], scores: &[f64]) -> Result<f64> {
    if truth.len() != scores.len() {
        return Err(Error::InvalidInput(format!(
            "{} labels but {} scores",
            truth.len(),
            scores.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("AUROC scores".into()));
    }
    let n_pos = truth.iter().filter(|l| l.is_malignant()).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass("AUROC needs both classes".into()));
    }
    let ranks = midranks(scores);
    let rank_sum: f64 = truth
        .iter()
        .zip(&ranks)
        .filter(|(l, _)| l.is_malignant())
        .map(|(_, r)| r)
        .sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    BalancedAccuracy,
    Sensitivity,
    Specificity,
    Auroc,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::BalancedAccuracy,
        Metric::Sensitivity,
        Metric::Specificity,
        Metric::Auroc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::BalancedAccuracy => "balanced_accuracy",
            Metric::Sensitivity => "sensitivity",
            Metric::Specificity => "specificity",
            Metric::Auroc => "auroc",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Metric::BalancedAccuracy => "Balanced accuracy",
            Metric::Sensitivity => "Sensitivity",
            Metric::Specificity => "Specificity",
            Metric::Auroc => "AUROC",
        }
    }

    /// Whether the metric is computed from hard labels (as opposed to scores).
    pub fn label_based(self) -> bool {
        self != Metric::Auroc
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Every metric for one set of outputs, in [`Metric::ALL`] order.
pub fn all_metrics(truth: &[Label], pred: &[Label], scores: &[f64]) -> Result<[f64; 4]> {
    let m = classification_metrics(&confusion(truth, pred)?)?;
    Ok([m.balanced_accuracy, m.sensitivity, m.specificity, auroc(truth, scores)?])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.ci_low <= v && v <= self.ci_high
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub method: String,
    pub n_resamples: usize,
    pub seed: u64,
    pub valid: usize,
    pub skipped: usize,
    pub redraws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n: usize,
    pub n_malignant: usize,
    pub confusion: ConfusionMatrix,
    pub balanced_accuracy: Interval,
    pub sensitivity: Interval,
    pub specificity: Interval,
    pub auroc: Interval,
    pub bootstrap: BootstrapSummary,
}

impl MetricReport {
    pub fn get(&self, m: Metric) -> &Interval {
        match m {
            Metric::BalancedAccuracy => &self.balanced_accuracy,
            Metric::Sensitivity => &self.sensitivity,
            Metric::Specificity => &self.specificity,
            Metric::Auroc => &self.auroc,
        }
    }
}

/// Point estimates and 95% percentile-bootstrap intervals for every metric.
///
/// Rows are resampled jointly, so label metrics and AUROC come from the same
/// resamples. Each interval is widened, if needed, to contain its point value.
pub fn evaluate(truth: &[Label], scores: &[f64], cfg: &BootstrapConfig) -> Result<MetricReport> {
    let pred: Vec<Label> = scores.iter().map(|&s| crate::classifiers::label_of(s)).collect();
    let cm = confusion(truth, &pred)?;
    let points = all_metrics(truth, &pred, scores)?;
    let samples = bootstrap_distribution(truth, &pred, scores, cfg)?;
    let interval = |m: Metric| {
        let v = &samples.values[m.index()];
        let point = points[m.index()];
        Interval {
            point,
            ci_low: percentile(v, 0.025).min(point),
            ci_high: percentile(v, 0.975).max(point),
        }
    };
    Ok(MetricReport {
        n: truth.len(),
        n_malignant: cm.positives() as usize,
        confusion: cm,
        balanced_accuracy: interval(Metric::BalancedAccuracy),
        sensitivity: interval(Metric::Sensitivity),
        specificity: interval(Metric::Specificity),
        auroc: interval(Metric::Auroc),
        bootstrap: BootstrapSummary {
            method: "percentile".into(),
            n_resamples: cfg.n_resamples,
            seed: cfg.seed,
            valid: samples.values[0].len(),
            skipped: samples.skipped,
            redraws: samples.redraws,
        },
    })
}
