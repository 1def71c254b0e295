//! Zero-shot class scoring from precomputed image and prompt embeddings.
//!
//! For each class the image embedding is compared with every prompt
//! embedding by cosine similarity, the similarities are averaged over the
//! class's prompts, and the mean goes through `sigmoid(scale * s)`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::data::{EmbeddingSet, ScoreKind, ScoreMatrix};
use crate::error::{Error, Result};
use crate::math::{sigmoid, Matrix};

pub const DEFAULT_SCALE: f64 = 5.0;
/// Rows whose norm is further than this from 1 count as unnormalized.
pub const NORM_TOLERANCE: f64 = 1e-6;

/// Out-of-distribution findings scored by the zero-shot head, in output order.
pub const OOD_CLASSES: [&str; 6] = ["Scoliosis", "Osteopenia", "Bulla", "Infarction", "Adenopathy", "Goiter"];

fn l2_norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Divides each row by its Euclidean norm.
pub fn unit_normalize(e: &EmbeddingSet) -> Result<EmbeddingSet> {
    let mut out = e.vectors().clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let norm = l2_norm(row);
        if norm == 0.0 {
            return Err(Error::ZeroNorm { row: r });
        }
        row.iter_mut().for_each(|x| *x /= norm);
    }
    Ok(EmbeddingSet::normalized_unchecked(e.ids().to_vec(), out))
}

fn check_unit_rows(m: &Matrix) -> Result<()> {
    for r in 0..m.rows() {
        if libm::fabs(l2_norm(m.row(r)) - 1.0) > NORM_TOLERANCE {
            return Err(Error::NotNormalized { row: r });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZsConfig {
    pub scale: f64,
}

impl Default for ZsConfig {
    fn default() -> Self {
        Self { scale: DEFAULT_SCALE }
    }
}

/// Per-class prompt embeddings, unit-normalized, in output column order.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptBank {
    class_names: Vec<String>,
    prompts: Vec<Vec<String>>,
    embeddings: Vec<Matrix>,
}

impl PromptBank {
    /// `embeddings[c]` holds the K_c prompt vectors of class `c`; rows are
    /// normalized here. `prompts` may be empty when only vectors are known,
    /// otherwise it must list one text per embedding row.
    pub fn new(class_names: Vec<String>, prompts: Vec<Vec<String>>, embeddings: Vec<EmbeddingSet>) -> Result<Self> {
        if class_names.is_empty() {
            return Err(Error::Empty("prompt bank classes"));
        }
        if embeddings.len() != class_names.len() {
            return Err(Error::ShapeMismatch {
                what: "prompt bank classes",
                expected: class_names.len(),
                found: embeddings.len(),
            });
        }
        if !prompts.is_empty() && prompts.len() != class_names.len() {
            return Err(Error::ShapeMismatch {
                what: "prompt texts per class",
                expected: class_names.len(),
                found: prompts.len(),
            });
        }
        let dim = embeddings[0].dim();
        let mut normalized = Vec::with_capacity(embeddings.len());
        for (c, e) in embeddings.iter().enumerate() {
            if e.is_empty() {
                return Err(Error::InvalidParameter(format!(
                    "class `{}` has no prompts",
                    class_names[c]
                )));
            }
            if e.dim() != dim {
                return Err(Error::ShapeMismatch {
                    what: "prompt embedding dimension",
                    expected: dim,
                    found: e.dim(),
                });
            }
            if let Some(texts) = prompts.get(c) {
                if texts.len() != e.len() {
                    return Err(Error::ShapeMismatch {
                        what: "prompt texts vs embeddings",
                        expected: e.len(),
                        found: texts.len(),
                    });
                }
            }
            normalized.push(unit_normalize(e)?.vectors().clone());
        }
        Ok(Self {
            class_names,
            prompts,
            embeddings: normalized,
        })
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn prompts(&self) -> &[Vec<String>] {
        &self.prompts
    }

    pub fn class_embeddings(&self, c: usize) -> &Matrix {
        &self.embeddings[c]
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn dim(&self) -> usize {
        self.embeddings[0].cols()
    }
}

/// Mean cosine similarity between a unit image vector and class `c`'s prompts.
pub fn class_similarity(image: &[f64], bank: &PromptBank, c: usize) -> Result<f64> {
    if image.len() != bank.dim() {
        return Err(Error::ShapeMismatch {
            what: "image embedding dimension",
            expected: bank.dim(),
            found: image.len(),
        });
    }
    let prompts = bank
        .embeddings
        .get(c)
        .ok_or_else(|| Error::InvalidParameter(format!("class index {c} out of range")))?;
    let total: f64 = (0..prompts.rows()).map(|k| dot(image, prompts.row(k))).sum();
    Ok(total / prompts.rows() as f64)
}

pub fn zs_probability(s: f64, cfg: &ZsConfig) -> f64 {
    sigmoid(cfg.scale * s)
}

/// Scores every image against every class.
///
/// Similarities for all prompts come from one image-by-prompt product; the
/// columns of each class are then averaged. Images must already be
/// unit-normalized.
pub fn score_batch(images: &EmbeddingSet, bank: &PromptBank, cfg: &ZsConfig) -> Result<ScoreMatrix> {
    if !(cfg.scale > 0.0) || !cfg.scale.is_finite() {
        return Err(Error::InvalidParameter(format!("scale must be > 0, got {}", cfg.scale)));
    }
    if images.dim() != bank.dim() {
        return Err(Error::ShapeMismatch {
            what: "image embedding dimension",
            expected: bank.dim(),
            found: images.dim(),
        });
    }
    check_unit_rows(images.vectors())?;

    // Stack prompts as a D x P matrix (transposed) for a row-times-matrix product.
    let dim = bank.dim();
    let offsets: Vec<usize> = core::iter::once(0)
        .chain(bank.embeddings.iter().scan(0, |acc, e| {
            *acc += e.rows();
            Some(*acc)
        }))
        .collect();
    let n_prompts = *offsets.last().unwrap_or(&0);
    let mut stacked_t = Matrix::zeros(dim, n_prompts);
    for (c, e) in bank.embeddings.iter().enumerate() {
        for k in 0..e.rows() {
            for (d, &v) in e.row(k).iter().enumerate() {
                stacked_t.set(d, offsets[c] + k, v);
            }
        }
    }

    let n = images.len();
    let mut sims = Matrix::zeros(n, n_prompts);
    for i in 0..n {
        let out = sims.row_mut(i);
        for (d, &x) in images.vectors().row(i).iter().enumerate() {
            for (o, &t) in out.iter_mut().zip(stacked_t.row(d)) {
                *o += x * t;
            }
        }
    }

    let mut probs = Matrix::zeros(n, bank.n_classes());
    for i in 0..n {
        let row = sims.row(i);
        for c in 0..bank.n_classes() {
            let group = &row[offsets[c]..offsets[c + 1]];
            let s = group.iter().sum::<f64>() / group.len() as f64;
            probs.set(i, c, zs_probability(s, cfg));
        }
    }
    ScoreMatrix::new(
        images.ids().to_vec(),
        bank.class_names.clone(),
        probs,
        ScoreKind::Probabilities,
    )
}
