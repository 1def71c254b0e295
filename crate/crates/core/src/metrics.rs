//! Evaluation metrics: per-class AP, ROC-AUC, F1 and ECE with macro averages.
//!
//! Conventions:
//! - AP is non-interpolated: precision summed at each positive's rank over the
//!   number of positives. Ranking is by descending score with ties broken by
//!   original index.
//! - AUC is the Mann-Whitney statistic; tied pairs count one half.
//! - F1 thresholds with `score >= threshold`; F1 is 0 when `2TP+FP+FN = 0`.
//! - ECE uses equal-width bins on `[0, 1]`, right-closed except the first.
//! - Classes where a metric is undefined are skipped from that macro mean and
//!   listed in the report; nothing is imputed.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use serde::{Deserialize, Serialize};

use crate::data::{LabelMatrix, ScoreMatrix};
use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_ECE_BINS: usize = 15;

fn check_lengths(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            what: "scores vs labels",
            expected: labels.len(),
            found: scores.len(),
        });
    }
    Ok(())
}

/// Indices sorted by score descending, stable on ties.
fn rank_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));
    order
}

/// Non-interpolated average precision; `None` without positives.
pub fn average_precision(scores: &[f64], labels: &[u8]) -> Result<Option<f64>> {
    check_lengths(scores, labels)?;
    let positives = labels.iter().filter(|&&y| y == 1).count();
    if positives == 0 {
        return Ok(None);
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in rank_order(scores).iter().enumerate() {
        if labels[i] == 1 {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(Some(sum / positives as f64))
}

/// ROC-AUC via midranks; `None` unless both classes are present.
pub fn auc_roc(scores: &[f64], labels: &[u8]) -> Result<Option<f64>> {
    check_lengths(scores, labels)?;
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));
    // Sum of 1-based midranks of the positives.
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let midrank = (start + 1 + end) as f64 / 2.0;
        let pos_in_group = order[start..end].iter().filter(|&&i| labels[i] == 1).count();
        rank_sum += midrank * pos_in_group as f64;
        start = end;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(Some(u / (n_pos as f64 * n_neg as f64)))
}

pub fn f1_at_threshold(scores: &[f64], labels: &[u8], threshold: f64) -> Result<f64> {
    check_lengths(scores, labels)?;
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    let denom = 2 * tp + fp + fneg;
    Ok(if denom == 0 {
        0.0
    } else {
        (2 * tp) as f64 / denom as f64
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Binning {
    #[default]
    EqualWidth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EceConfig {
    pub n_bins: usize,
    pub binning: Binning,
}

impl Default for EceConfig {
    fn default() -> Self {
        Self {
            n_bins: DEFAULT_ECE_BINS,
            binning: Binning::EqualWidth,
        }
    }
}

/// Bin of `s` among `n` equal-width bins: `[0, 1/n]`, `(1/n, 2/n]`, ...
fn bin_index(s: f64, n: usize) -> usize {
    if s <= 0.0 {
        return 0;
    }
    let b = libm::ceil(s * n as f64) as usize;
    b.clamp(1, n) - 1
}

pub fn ece(scores: &[f64], labels: &[u8], cfg: &EceConfig) -> Result<f64> {
    check_lengths(scores, labels)?;
    if cfg.n_bins == 0 {
        return Err(Error::InvalidParameter("ece needs at least one bin".into()));
    }
    if scores.is_empty() {
        return Err(Error::Empty("scores"));
    }
    if scores.iter().any(|s| !(0.0..=1.0).contains(s)) {
        return Err(Error::InvalidParameter("ece scores must lie in [0, 1]".into()));
    }
    let mut conf = vec![0.0; cfg.n_bins];
    let mut pos = vec![0.0; cfg.n_bins];
    let mut count = vec![0usize; cfg.n_bins];
    for (&s, &y) in scores.iter().zip(labels) {
        let b = bin_index(s, cfg.n_bins);
        conf[b] += s;
        pos[b] += f64::from(y);
        count[b] += 1;
    }
    let n = scores.len() as f64;
    Ok((0..cfg.n_bins)
        .filter(|&b| count[b] > 0)
        .map(|b| libm::fabs(conf[b] - pos[b]) / n)
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub ap: Option<f64>,
    pub auc: Option<f64>,
    pub f1: Option<f64>,
    pub ece: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroMetrics {
    pub map: Option<f64>,
    pub mauc: Option<f64>,
    pub mf1: Option<f64>,
    pub mece: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedClass {
    pub class: String,
    pub metric: String,
    pub reason: String,
}

/// The conventions a report was computed under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conventions {
    pub ap: String,
    pub auc: String,
    pub f1_threshold: f64,
    pub ece_bins: usize,
    pub ece_binning: Binning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_class: Vec<ClassMetrics>,
    #[serde(rename = "macro")]
    pub macro_: MacroMetrics,
    pub skipped_classes: Vec<SkippedClass>,
    pub conventions: Conventions,
}

/// Mean of the defined values, `None` if there are none.
pub fn macro_mean(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values
        .into_iter()
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Per-class and macro metrics. Score rows are matched to label rows by id;
/// both must cover the same ids and classes.
pub fn macro_report(
    scores: &ScoreMatrix,
    labels: &LabelMatrix,
    threshold: f64,
    ece_cfg: &EceConfig,
) -> Result<MetricReport> {
    let scores = &scores.aligned_to(labels.ids(), labels.class_names())?;
    let probabilities = scores.kind() == crate::data::ScoreKind::Probabilities;
    let mut per_class = Vec::with_capacity(labels.n_classes());
    let mut skipped = Vec::new();
    for (c, name) in labels.class_names().iter().enumerate() {
        let s = scores.values().column(c);
        let y = labels.column(c);
        let ap = average_precision(&s, &y)?;
        let auc = auc_roc(&s, &y)?;
        let f1 = Some(f1_at_threshold(&s, &y, threshold)?);
        let e = if probabilities {
            Some(ece(&s, &y, ece_cfg)?)
        } else {
            None
        };
        let mut skip = |metric: &str, reason: &str| {
            skipped.push(SkippedClass {
                class: name.clone(),
                metric: metric.into(),
                reason: reason.into(),
            })
        };
        if ap.is_none() {
            skip("ap", "no positive labels");
        }
        if auc.is_none() {
            skip("auc", "needs both positive and negative labels");
        }
        if e.is_none() {
            skip("ece", "scores are logits, not probabilities");
        }
        per_class.push(ClassMetrics {
            class: name.clone(),
            ap,
            auc,
            f1,
            ece: e,
        });
    }
    let macro_ = MacroMetrics {
        map: macro_mean(per_class.iter().map(|m| m.ap)),
        mauc: macro_mean(per_class.iter().map(|m| m.auc)),
        mf1: macro_mean(per_class.iter().map(|m| m.f1)),
        mece: macro_mean(per_class.iter().map(|m| m.ece)),
    };
    Ok(MetricReport {
        per_class,
        macro_,
        skipped_classes: skipped,
        conventions: Conventions {
            ap: "non-interpolated, ties by original index".into(),
            auc: "mann-whitney, ties count 0.5".into(),
            f1_threshold: threshold,
            ece_bins: ece_cfg.n_bins,
            ece_binning: ece_cfg.binning,
        },
    })
}
