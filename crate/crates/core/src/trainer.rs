//! Desk-scale testbed: a synthetic long-tailed multi-label generator and a
//! linear sigmoid classifier trained with plain SGD.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{class_stats, LabelMatrix};
use crate::error::{Error, Result};
use crate::loss::{db_loss, DbLossParams};
use crate::math::Matrix;
use crate::sampler::{class_repeat_factors, sample_repeat_factors, EpochSampler, SamplerConfig};

/// Parameters of the synthetic long-tailed dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_samples: usize,
    pub n_classes: usize,
    pub feature_dim: usize,
    pub power_law_exponent: f64,
    pub noise_std: f64,
    /// Target frequency of the most frequent class.
    pub head_frequency: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_samples: 4000,
            n_classes: 20,
            feature_dim: 32,
            power_law_exponent: 1.5,
            noise_std: 1.0,
            head_frequency: 0.3,
            seed: 0,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if self.n_samples == 0 || self.n_classes == 0 || self.feature_dim == 0 {
            return Err(Error::InvalidParameter(format!(
                "infeasible synthetic spec: {} samples, {} classes, dim {}",
                self.n_samples, self.n_classes, self.feature_dim
            )));
        }
        if !(self.power_law_exponent >= 0.0) || !self.power_law_exponent.is_finite() {
            return Err(Error::InvalidParameter("power-law exponent must be >= 0".into()));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(Error::InvalidParameter("noise std must be >= 0".into()));
        }
        if !(self.head_frequency > 0.0 && self.head_frequency <= 1.0) {
            return Err(Error::InvalidParameter("head frequency must be in (0, 1]".into()));
        }
        Ok(())
    }

    /// `head_frequency * (c+1)^-exponent`, before clipping.
    pub fn power_law_frequencies(&self) -> Vec<f64> {
        (0..self.n_classes)
            .map(|c| self.head_frequency * libm::pow((c + 1) as f64, -self.power_law_exponent))
            .collect()
    }

    /// Power-law frequencies clipped below at one expected positive.
    pub fn target_frequencies(&self) -> Vec<f64> {
        let floor = 1.0 / self.n_samples as f64;
        self.power_law_frequencies().into_iter().map(|f| f.max(floor)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub features: Matrix,
    pub labels: LabelMatrix,
    pub prototypes: Matrix,
}

impl SyntheticData {
    /// Index where the held-out tail (last 20% of samples) begins.
    pub fn split_point(&self) -> usize {
        let n = self.labels.n_samples();
        n - n / 5
    }

    /// `(train, held_out)` split by index, before any sampling.
    pub fn split(&self) -> ((Matrix, LabelMatrix), (Matrix, LabelMatrix)) {
        let cut = self.split_point();
        let n = self.labels.n_samples();
        let take = |range: core::ops::Range<usize>| {
            let idx: Vec<usize> = range.collect();
            (gather_rows(&self.features, &idx), self.labels.select_rows(&idx))
        };
        (take(0..cut), take(cut..n))
    }
}

fn gather_rows(m: &Matrix, idx: &[usize]) -> Matrix {
    let mut data = Vec::with_capacity(idx.len() * m.cols());
    for &i in idx {
        data.extend_from_slice(m.row(i));
    }
    Matrix::from_vec(idx.len(), m.cols(), data).expect("gathered rows have matching width")
}

/// Sum of each sample's positive prototypes plus isotropic Gaussian noise.
pub fn features_from_labels(prototypes: &Matrix, labels: &LabelMatrix, noise_std: f64, rng: &mut impl Rng) -> Matrix {
    let dim = prototypes.cols();
    let mut features = Matrix::zeros(labels.n_samples(), dim);
    for i in 0..labels.n_samples() {
        let row = features.row_mut(i);
        for (c, &y) in labels.row(i).iter().enumerate() {
            if y == 1 {
                row.iter_mut().zip(prototypes.row(c)).for_each(|(f, p)| *f += p);
            }
        }
        if noise_std > 0.0 {
            for f in row.iter_mut() {
                let z: f64 = StandardNormal.sample(rng);
                *f += noise_std * z;
            }
        }
    }
    features
}

/// Draws prototypes, labels (independent Bernoulli per class) and features.
/// A class that ends up with no positive gets one at a uniformly drawn sample.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, c, d) = (spec.n_samples, spec.n_classes, spec.feature_dim);

    let proto: Vec<f64> = (0..c * d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let prototypes = Matrix::from_vec(c, d, proto)?;

    let freqs = spec.target_frequencies();
    let mut values = vec![0u8; n * c];
    for i in 0..n {
        for (j, &f) in freqs.iter().enumerate() {
            values[i * c + j] = u8::from(rng.random::<f64>() < f);
        }
    }
    for j in 0..c {
        if (0..n).all(|i| values[i * c + j] == 0) {
            let i = rng.random_range(0..n);
            values[i * c + j] = 1;
        }
    }
    let ids = (0..n).map(|i| format!("s{i:05}")).collect();
    let names = (0..c).map(|j| format!("class{j:02}")).collect();
    let labels = LabelMatrix::new(ids, names, values)?;
    let features = features_from_labels(&prototypes, &labels, spec.noise_std, &mut rng);
    Ok(SyntheticData {
        features,
        labels,
        prototypes,
    })
}

/// `z = W x + b` with `W` of shape classes × features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub class_names: Vec<String>,
}

impl LinearModel {
    pub fn zeros(class_names: Vec<String>, dim: usize) -> Self {
        Self {
            weights: Matrix::zeros(class_names.len(), dim),
            bias: vec![0.0; class_names.len()],
            class_names,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.weights.rows()
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.as_slice().iter().chain(&self.bias).all(|v| v.is_finite())
    }
}

/// Row-wise logits for a batch of feature vectors.
pub fn forward(model: &LinearModel, x: &Matrix) -> Result<Matrix> {
    if x.cols() != model.dim() {
        return Err(Error::ShapeMismatch {
            what: "feature dimension",
            expected: model.dim(),
            found: x.cols(),
        });
    }
    if model.bias.len() != model.n_classes() {
        return Err(Error::ShapeMismatch {
            what: "bias length",
            expected: model.n_classes(),
            found: model.bias.len(),
        });
    }
    let mut z = Matrix::zeros(x.rows(), model.n_classes());
    for i in 0..x.rows() {
        let xi = x.row(i);
        for (c, out) in z.row_mut(i).iter_mut().enumerate() {
            let w = model.weights.row(c);
            *out = model.bias[c] + w.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    Ok(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Db,
    PlainBce,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    Cas,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub loss: LossKind,
    pub sampler: SamplerKind,
    /// Seeds the epoch shuffle stream.
    pub seed: u64,
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParameter("epochs and batch size must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: LinearModel,
    /// Mean training loss of each epoch.
    pub loss_trace: Vec<f64>,
}

/// Per-class weights and margins for the selected objective.
pub fn objective_terms(labels: &LabelMatrix, loss: LossKind, params: &DbLossParams) -> Result<(Vec<f64>, Vec<f64>)> {
    let c = labels.n_classes();
    match loss {
        LossKind::PlainBce => Ok((vec![1.0; c], vec![0.0; c])),
        LossKind::Db => params.weights_and_margins(&class_stats(labels)?.counts),
    }
}

/// Mini-batch SGD on the selected loss over epochs from the selected sampler.
///
/// The model starts at zero. Each epoch's plan comes from one ChaCha8 stream
/// seeded with `cfg.seed`; batches are consecutive slices of the plan.
pub fn train(
    features: &Matrix,
    labels: &LabelMatrix,
    cfg: &TrainConfig,
    loss_params: &DbLossParams,
    sampler_cfg: &SamplerConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if features.rows() != labels.n_samples() {
        return Err(Error::ShapeMismatch {
            what: "features vs labels",
            expected: labels.n_samples(),
            found: features.rows(),
        });
    }
    let (w, m) = objective_terms(labels, cfg.loss, loss_params)?;
    let n = labels.n_samples();
    let mut sampler = match cfg.sampler {
        SamplerKind::Uniform => EpochSampler::uniform(n, cfg.seed),
        SamplerKind::Cas => {
            let stats = class_stats(labels)?;
            let class_r = class_repeat_factors(&stats.frequencies, sampler_cfg)?;
            let repeat = sample_repeat_factors(labels, &class_r.factors, sampler_cfg)?;
            EpochSampler::new(repeat, cfg.seed)?
        }
    };

    let y_all = labels.to_matrix();
    let mut model = LinearModel::zeros(labels.class_names().to_vec(), features.cols());
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let plan = sampler.next_epoch();
        let mut total = 0.0;
        for batch in plan.indices.chunks(cfg.batch_size) {
            let x = gather_rows(features, batch);
            let y = gather_rows(&y_all, batch);
            let z = forward(&model, &x)?;
            let r = db_loss(&z, &y, &w, &m)?;
            if !r.loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            total += r.loss * batch.len() as f64;
            sgd_step(&mut model, &x, &r.grad_z, cfg.learning_rate);
            if !model.is_finite() {
                return Err(Error::Diverged { epoch });
            }
        }
        trace.push(total / plan.epoch_len.max(1) as f64);
    }
    Ok(TrainOutcome {
        model,
        loss_trace: trace,
    })
}

fn sgd_step(model: &mut LinearModel, x: &Matrix, grad_z: &Matrix, lr: f64) {
    if lr == 0.0 {
        return;
    }
    for c in 0..model.n_classes() {
        let mut gb = 0.0;
        let mut gw = vec![0.0; model.dim()];
        for i in 0..x.rows() {
            let g = grad_z.get(i, c);
            gb += g;
            gw.iter_mut().zip(x.row(i)).for_each(|(a, &xv)| *a += g * xv);
        }
        model.bias[c] -= lr * gb;
        model
            .weights
            .row_mut(c)
            .iter_mut()
            .zip(&gw)
            .for_each(|(wv, g)| *wv -= lr * g);
    }
}
