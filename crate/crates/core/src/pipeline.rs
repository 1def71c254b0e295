//! Inference-time score refinement: sigmoid, TTA merge, weighted ensemble and
//! normal gating.
//!
//! TTA views are merged in probability space: each view goes through the
//! sigmoid before the mean. Multi-input stages match rows by sample id (not
//! row position) and require identical class order.

use alloc::format;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::data::{ScoreKind, ScoreMatrix};
use crate::error::{Error, Result};
use crate::math::{sigmoid, Matrix};

/// Raw ensemble weights of the two submission checkpoints.
pub const DEFAULT_ENSEMBLE_WEIGHTS: [f64; 2] = [1.0, 1.5];
pub const DEFAULT_GATE_EXPONENT: f64 = 0.5;
pub const DEFAULT_NORMAL_CLASS: &str = "Normal";

fn require_kind(m: &ScoreMatrix, kind: ScoreKind) -> Result<()> {
    if m.kind() != kind {
        return Err(Error::WrongKind {
            expected: kind.as_str(),
        });
    }
    Ok(())
}

pub fn sigmoid_scores(z: &ScoreMatrix) -> Result<ScoreMatrix> {
    require_kind(z, ScoreKind::Logits)?;
    z.with_values(z.values().map(sigmoid), ScoreKind::Probabilities)
}

/// Every input reordered to the first one's row order, kinds checked.
fn align_all(inputs: &[ScoreMatrix], kind: ScoreKind) -> Result<Vec<ScoreMatrix>> {
    let first = &inputs[0];
    inputs
        .iter()
        .map(|m| {
            require_kind(m, kind)?;
            m.aligned_to(first.ids(), first.class_names())
        })
        .collect()
}

/// Mean of per-view sigmoids.
pub fn tta_merge(views: &[ScoreMatrix]) -> Result<ScoreMatrix> {
    let first = views.first().ok_or(Error::Empty("tta views"))?;
    let views = align_all(views, ScoreKind::Logits)?;
    let mut acc = Matrix::zeros(first.n_samples(), first.n_classes());
    for v in &views {
        for (a, &z) in acc.as_mut_slice().iter_mut().zip(v.values().as_slice()) {
            *a += sigmoid(z);
        }
    }
    let k = views.len() as f64;
    first.with_values(acc.map(|s| (s / k).clamp(0.0, 1.0)), ScoreKind::Probabilities)
}

/// Raw member weights and their normalized counterparts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    member_weights: Vec<f64>,
    normalized_weights: Vec<f64>,
}

impl EnsembleSpec {
    pub fn new(member_weights: Vec<f64>) -> Result<Self> {
        if member_weights.is_empty() {
            return Err(Error::Empty("ensemble weights"));
        }
        if let Some(bad) = member_weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "ensemble weight must be > 0, got {bad}"
            )));
        }
        let total: f64 = member_weights.iter().sum();
        let normalized_weights = member_weights.iter().map(|w| w / total).collect();
        Ok(Self {
            member_weights,
            normalized_weights,
        })
    }

    pub fn member_weights(&self) -> &[f64] {
        &self.member_weights
    }

    pub fn normalized_weights(&self) -> &[f64] {
        &self.normalized_weights
    }
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        Self::new(DEFAULT_ENSEMBLE_WEIGHTS.to_vec()).expect("positive defaults")
    }
}

/// Convex combination of probability matrices.
pub fn ensemble(members: &[ScoreMatrix], spec: &EnsembleSpec) -> Result<ScoreMatrix> {
    let first = members.first().ok_or(Error::Empty("ensemble members"))?;
    if members.len() != spec.normalized_weights.len() {
        return Err(Error::ShapeMismatch {
            what: "ensemble members vs weights",
            expected: spec.normalized_weights.len(),
            found: members.len(),
        });
    }
    let members = align_all(members, ScoreKind::Probabilities)?;
    let mut acc = Matrix::zeros(first.n_samples(), first.n_classes());
    for (m, &w) in members.iter().zip(&spec.normalized_weights) {
        for (a, &p) in acc.as_mut_slice().iter_mut().zip(m.values().as_slice()) {
            *a += w * p;
        }
    }
    first.with_values(acc.map(|p| p.clamp(0.0, 1.0)), ScoreKind::Probabilities)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateConfig {
    pub normal_class_index: usize,
    pub exponent: f64,
}

/// `p_c <- p_c * (1 - p_normal)^exponent` for every class but the normal one.
pub fn normal_gate(p: &ScoreMatrix, cfg: &GateConfig) -> Result<ScoreMatrix> {
    require_kind(p, ScoreKind::Probabilities)?;
    if cfg.normal_class_index >= p.n_classes() {
        return Err(Error::InvalidParameter(format!(
            "normal class index {} out of range for {} classes",
            cfg.normal_class_index,
            p.n_classes()
        )));
    }
    if !(cfg.exponent >= 0.0) || !cfg.exponent.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "gate exponent must be >= 0, got {}",
            cfg.exponent
        )));
    }
    let mut out = p.values().clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let p0 = row[cfg.normal_class_index];
        let factor = if cfg.exponent == 0.0 {
            1.0
        } else {
            libm::pow(1.0 - p0, cfg.exponent)
        };
        for (c, v) in row.iter_mut().enumerate() {
            if c != cfg.normal_class_index {
                *v *= factor;
            }
        }
    }
    p.with_values(out, ScoreKind::Probabilities)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::{String, ToString};
    use alloc::vec;

    fn scores(rows: &[&[f64]], kind: ScoreKind) -> ScoreMatrix {
        let m = Matrix::from_rows(rows).unwrap();
        let ids = (0..m.rows()).map(|i| i.to_string()).collect();
        let names = (0..m.cols()).map(|j| format!("c{j}")).collect();
        ScoreMatrix::new(ids, names, m, kind).unwrap()
    }

    #[test]
    fn sigmoid_values() {
        let z = scores(&[&[0.0, 500.0, libm::log(3.0)]], ScoreKind::Logits);
        let p = sigmoid_scores(&z).unwrap();
        assert_eq!(p.values().get(0, 0), 0.5);
        assert!((p.values().get(0, 1) - 1.0).abs() <= 1e-12);
        assert!((p.values().get(0, 2) - 0.75).abs() <= 1e-12);
        assert!(sigmoid_scores(&p).is_err());
    }

    #[test]
    fn tta_merge_means_sigmoids() {
        let a = scores(&[&[0.0]], ScoreKind::Logits);
        let b = scores(&[&[libm::log(3.0)]], ScoreKind::Logits);
        let p = tta_merge(&[a.clone(), b]).unwrap();
        assert!((p.values().get(0, 0) - 0.625).abs() <= 1e-12);
        assert_eq!(
            tta_merge(core::slice::from_ref(&a)).unwrap(),
            sigmoid_scores(&a).unwrap()
        );
        assert_eq!(tta_merge(&[a.clone(), a.clone()]).unwrap(), sigmoid_scores(&a).unwrap());
        assert_eq!(tta_merge(&[]), Err(Error::Empty("tta views")));
    }

    #[test]
    fn views_align_by_id() {
        let a = scores(&[&[0.0], &[1.0]], ScoreKind::Logits);
        let permuted = ScoreMatrix::new(
            vec![String::from("1"), String::from("0")],
            vec![String::from("c0")],
            Matrix::from_rows(&[[1.0], [0.0]]).unwrap(),
            ScoreKind::Logits,
        )
        .unwrap();
        assert_eq!(tta_merge(&[a.clone(), permuted]).unwrap(), sigmoid_scores(&a).unwrap());

        let other = ScoreMatrix::new(
            vec![String::from("0"), String::from("2")],
            vec![String::from("c0")],
            Matrix::zeros(2, 1),
            ScoreKind::Logits,
        )
        .unwrap();
        assert!(matches!(tta_merge(&[a.clone(), other]), Err(Error::Misaligned(_))));
        let renamed = ScoreMatrix::new(
            vec![String::from("0"), String::from("1")],
            vec![String::from("d0")],
            Matrix::zeros(2, 1),
            ScoreKind::Logits,
        )
        .unwrap();
        assert!(matches!(tta_merge(&[a, renamed]), Err(Error::Misaligned(_))));
    }

    #[test]
    fn ensemble_weights_normalize() {
        let spec = EnsembleSpec::new(vec![1.0, 1.5]).unwrap();
        assert!((spec.normalized_weights()[0] - 0.4).abs() <= 1e-12);
        assert!((spec.normalized_weights()[1] - 0.6).abs() <= 1e-12);
        let lo = scores(&[&[0.0]], ScoreKind::Probabilities);
        let hi = scores(&[&[1.0]], ScoreKind::Probabilities);
        let e = ensemble(&[lo, hi], &spec).unwrap();
        assert!((e.values().get(0, 0) - 0.6).abs() <= 1e-12);
        assert!(EnsembleSpec::new(vec![1.0, 0.0]).is_err());
        assert!(EnsembleSpec::new(vec![]).is_err());
    }

    #[test]
    fn gate_examples() {
        let p = scores(&[&[0.0, 0.4, 0.9], &[0.75, 0.4, 0.8]], ScoreKind::Probabilities);
        let cfg = GateConfig {
            normal_class_index: 0,
            exponent: 0.5,
        };
        let g = normal_gate(&p, &cfg).unwrap();
        assert_eq!(g.values().row(0), p.values().row(0));
        assert_eq!(g.values().row(1), &[0.75, 0.2, 0.4]);
        let g0 = normal_gate(&p, &GateConfig { exponent: 0.0, ..cfg }).unwrap();
        assert_eq!(g0, p);
        assert!(normal_gate(
            &p,
            &GateConfig {
                normal_class_index: 3,
                ..cfg
            }
        )
        .is_err());
    }
}
