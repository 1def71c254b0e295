//! Two-arm synthetic comparison: distribution-balanced loss with class-aware
//! sampling against plain BCE with uniform sampling, scored on the held-out
//! split by head and tail tercile macro-AP.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::data::{class_stats, LabelMatrix, ScoreKind, ScoreMatrix};
use crate::error::Result;
use crate::loss::DbLossParams;
use crate::math::{sigmoid, Matrix};
use crate::metrics::{macro_mean, macro_report, EceConfig, MetricReport, DEFAULT_THRESHOLD};
use crate::sampler::SamplerConfig;
use crate::trainer::{forward, generate_synthetic, train, LinearModel, LossKind, SamplerKind, SynthSpec, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub synth: SynthSpec,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub loss_params: DbLossParams,
    pub sampler: SamplerConfig,
    pub threshold: f64,
    pub ece: EceConfig,
}

impl ExperimentConfig {
    /// The fixed protocol used by `demo`, with every seed set to `seed`.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            synth: SynthSpec {
                seed,
                ..SynthSpec::default()
            },
            learning_rate: 2.0,
            epochs: 30,
            batch_size: 32,
            loss_params: DbLossParams::default(),
            sampler: SamplerConfig {
                seed,
                ..SamplerConfig::default()
            },
            threshold: DEFAULT_THRESHOLD,
            ece: EceConfig::default(),
        }
    }

    fn train_config(&self, loss: LossKind, sampler: SamplerKind) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            loss,
            sampler,
            seed: self.sampler.seed,
        }
    }
}

/// Class indices of the tail and head terciles by training count.
/// Ties are broken by class index.
pub fn terciles(counts: &[u64]) -> (Vec<usize>, Vec<usize>) {
    let k = counts.len() / 3;
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by_key(|&c| (counts[c], c));
    let tail = order[..k].to_vec();
    let mut by_desc: Vec<usize> = (0..counts.len()).collect();
    by_desc.sort_by_key(|&c| (core::cmp::Reverse(counts[c]), c));
    let head = by_desc[..k].to_vec();
    (tail, head)
}

/// Sigmoid probabilities of a model on a feature matrix.
pub fn predict_probabilities(
    model: &LinearModel,
    features: &Matrix,
    ids: Vec<alloc::string::String>,
) -> Result<ScoreMatrix> {
    let z = forward(model, features)?;
    ScoreMatrix::new(ids, model.class_names.clone(), z.map(sigmoid), ScoreKind::Probabilities)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub loss: LossKind,
    pub sampler: SamplerKind,
    pub model: LinearModel,
    pub loss_trace: Vec<f64>,
    pub report: MetricReport,
    pub tail_map: Option<f64>,
    pub head_map: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub seed: u64,
    pub tail_classes: Vec<usize>,
    pub head_classes: Vec<usize>,
    pub balanced: ArmResult,
    pub baseline: ArmResult,
}

impl Comparison {
    pub fn tail_improved(&self) -> bool {
        matches!((self.balanced.tail_map, self.baseline.tail_map), (Some(a), Some(b)) if a > b)
    }

    /// Baseline head mAP minus balanced head mAP.
    pub fn head_drop(&self) -> Option<f64> {
        Some(self.baseline.head_map? - self.balanced.head_map?)
    }
}

fn tercile_map(report: &MetricReport, classes: &[usize]) -> Option<f64> {
    macro_mean(classes.iter().map(|&c| report.per_class[c].ap))
}

fn run_arm(
    cfg: &ExperimentConfig,
    train_set: &(Matrix, LabelMatrix),
    held_out: &(Matrix, LabelMatrix),
    tail: &[usize],
    head: &[usize],
    loss: LossKind,
    sampler: SamplerKind,
) -> Result<ArmResult> {
    let out = train(
        &train_set.0,
        &train_set.1,
        &cfg.train_config(loss, sampler),
        &cfg.loss_params,
        &cfg.sampler,
    )?;
    let probs = predict_probabilities(&out.model, &held_out.0, held_out.1.ids().to_vec())?;
    let report = macro_report(&probs, &held_out.1, cfg.threshold, &cfg.ece)?;
    Ok(ArmResult {
        loss,
        sampler,
        tail_map: tercile_map(&report, tail),
        head_map: tercile_map(&report, head),
        model: out.model,
        loss_trace: out.loss_trace,
        report,
    })
}

/// Generates the data once and trains both arms on the same training split.
pub fn run_comparison(cfg: &ExperimentConfig) -> Result<Comparison> {
    let data = generate_synthetic(&cfg.synth)?;
    let (train_set, held_out) = data.split();
    let counts = class_stats(&train_set.1)?.counts;
    let (tail, head) = terciles(&counts);
    let balanced = run_arm(cfg, &train_set, &held_out, &tail, &head, LossKind::Db, SamplerKind::Cas)?;
    let baseline = run_arm(
        cfg,
        &train_set,
        &held_out,
        &tail,
        &head,
        LossKind::PlainBce,
        SamplerKind::Uniform,
    )?;
    Ok(Comparison {
        seed: cfg.synth.seed,
        tail_classes: tail,
        head_classes: head,
        balanced,
        baseline,
    })
}
