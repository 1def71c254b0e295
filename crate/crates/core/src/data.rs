//! Shared data model: label and score matrices, per-class statistics and
//! embedding sets.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Matrix;

fn check_unique_ids(ids: &[String]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateId(id.clone()));
        }
    }
    Ok(())
}

/// N×C binary ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    ids: Vec<String>,
    class_names: Vec<String>,
    values: Vec<u8>,
}

impl LabelMatrix {
    /// `values` is row-major with `ids.len()` rows and `class_names.len()` columns.
    pub fn new(ids: Vec<String>, class_names: Vec<String>, values: Vec<u8>) -> Result<Self> {
        let n = ids.len();
        let c = class_names.len();
        if values.len() != n * c {
            return Err(Error::ShapeMismatch {
                what: "label values",
                expected: n * c,
                found: values.len(),
            });
        }
        check_unique_ids(&ids)?;
        if let Some(pos) = values.iter().position(|&v| v > 1) {
            return Err(Error::NonBinaryLabel {
                row: pos / c,
                col: pos % c,
            });
        }
        Ok(Self {
            ids,
            class_names,
            values,
        })
    }

    /// Convenience constructor with generated ids (`0`, `1`, ...) and class names (`c0`, ...).
    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R]) -> Result<Self> {
        let c = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * c);
        for r in rows {
            let r = r.as_ref();
            if r.len() != c {
                return Err(Error::ShapeMismatch {
                    what: "label row",
                    expected: c,
                    found: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        let ids = (0..rows.len()).map(|i| i.to_string()).collect();
        let names = (0..c).map(|j| alloc::format!("c{j}")).collect();
        Self::new(ids, names, values)
    }

    pub fn n_samples(&self) -> usize {
        self.ids.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    #[inline]
    pub fn get(&self, i: usize, c: usize) -> u8 {
        self.values[i * self.class_names.len() + c]
    }

    pub fn row(&self, i: usize) -> &[u8] {
        let c = self.class_names.len();
        &self.values[i * c..(i + 1) * c]
    }

    pub fn column(&self, c: usize) -> Vec<u8> {
        (0..self.n_samples()).map(|i| self.get(i, c)).collect()
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    /// Labels as a real-valued matrix, for loss evaluation.
    pub fn to_matrix(&self) -> Matrix {
        let data = self.values.iter().map(|&v| f64::from(v)).collect();
        Matrix::from_vec(self.n_samples(), self.n_classes(), data).expect("shape checked at construction")
    }

    /// Rows `indices` in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let c = self.n_classes();
        let mut values = Vec::with_capacity(indices.len() * c);
        let mut ids = Vec::with_capacity(indices.len());
        for &i in indices {
            values.extend_from_slice(self.row(i));
            ids.push(self.ids[i].clone());
        }
        Self {
            ids,
            class_names: self.class_names.clone(),
            values,
        }
    }
}

/// Whether a [`ScoreMatrix`] holds raw logits or probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    Logits,
    Probabilities,
}

impl ScoreKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreKind::Logits => "logits",
            ScoreKind::Probabilities => "probabilities",
        }
    }
}

/// N×C real-valued scores, columns ordered as `class_names`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    ids: Vec<String>,
    class_names: Vec<String>,
    values: Matrix,
    kind: ScoreKind,
}

impl ScoreMatrix {
    pub fn new(ids: Vec<String>, class_names: Vec<String>, values: Matrix, kind: ScoreKind) -> Result<Self> {
        if values.rows() != ids.len() {
            return Err(Error::ShapeMismatch {
                what: "score rows",
                expected: ids.len(),
                found: values.rows(),
            });
        }
        if values.cols() != class_names.len() {
            return Err(Error::ShapeMismatch {
                what: "score columns",
                expected: class_names.len(),
                found: values.cols(),
            });
        }
        check_unique_ids(&ids)?;
        let cols = values.cols().max(1);
        for (pos, &v) in values.as_slice().iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { what: "score matrix" });
            }
            if kind == ScoreKind::Probabilities && !(0.0..=1.0).contains(&v) {
                return Err(Error::ProbabilityOutOfRange {
                    row: pos / cols,
                    col: pos % cols,
                });
            }
        }
        Ok(Self {
            ids,
            class_names,
            values,
            kind,
        })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn kind(&self) -> ScoreKind {
        self.kind
    }

    pub fn n_samples(&self) -> usize {
        self.ids.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.class_names.iter().position(|c| c == name)
    }

    /// Same ids and classes, new values and kind. Used by elementwise stages.
    pub(crate) fn with_values(&self, values: Matrix, kind: ScoreKind) -> Result<Self> {
        Self::new(self.ids.clone(), self.class_names.clone(), values, kind)
    }

    /// Rows reordered to follow `ids`. The id sets must match exactly and the
    /// class names must equal `class_names`.
    pub fn aligned_to(&self, ids: &[String], class_names: &[String]) -> Result<ScoreMatrix> {
        if self.class_names != class_names {
            return Err(Error::Misaligned("class names differ".into()));
        }
        if self.ids.len() != ids.len() {
            return Err(Error::Misaligned(alloc::format!(
                "{} vs {} samples",
                self.ids.len(),
                ids.len()
            )));
        }
        if self.ids == ids {
            return Ok(self.clone());
        }
        let position: BTreeMap<&str, usize> = self.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let mut values = Matrix::zeros(ids.len(), self.n_classes());
        for (dst, id) in ids.iter().enumerate() {
            let src = *position
                .get(id.as_str())
                .ok_or_else(|| Error::Misaligned(alloc::format!("id `{id}` missing")))?;
            values.row_mut(dst).copy_from_slice(self.values.row(src));
        }
        Self::new(ids.to_vec(), self.class_names.clone(), values, self.kind)
    }
}

/// Per-class quantities used by the loss and the sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassConfig {
    pub counts: Vec<u64>,
    pub frequencies: Vec<f64>,
    pub weights: Vec<f64>,
    pub margins: Vec<f64>,
    pub repeat_factors: Vec<f64>,
}

/// Counts and frequencies per class. Weights, margins and repeat factors
/// start at 1, 0 and 1.
pub fn class_stats(labels: &LabelMatrix) -> Result<ClassConfig> {
    let n = labels.n_samples();
    if n == 0 {
        return Err(Error::Empty("label matrix"));
    }
    let c = labels.n_classes();
    let mut counts = vec![0u64; c];
    for i in 0..n {
        for (count, &y) in counts.iter_mut().zip(labels.row(i)) {
            *count += u64::from(y);
        }
    }
    let frequencies = counts.iter().map(|&k| k as f64 / n as f64).collect();
    Ok(ClassConfig {
        counts,
        frequencies,
        weights: vec![1.0; c],
        margins: vec![0.0; c],
        repeat_factors: vec![1.0; c],
    })
}

/// Row-major embedding vectors with ids.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    ids: Vec<String>,
    vectors: Matrix,
    normalized: bool,
}

impl EmbeddingSet {
    pub fn new(ids: Vec<String>, vectors: Matrix) -> Result<Self> {
        if ids.len() != vectors.rows() {
            return Err(Error::ShapeMismatch {
                what: "embedding ids",
                expected: vectors.rows(),
                found: ids.len(),
            });
        }
        if vectors.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "embedding" });
        }
        Ok(Self {
            ids,
            vectors,
            normalized: false,
        })
    }

    pub(crate) fn normalized_unchecked(ids: Vec<String>, vectors: Matrix) -> Self {
        Self {
            ids,
            vectors,
            normalized: true,
        }
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }
}
