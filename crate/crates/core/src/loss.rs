//! Distribution-balanced loss: effective-number class weights, positive-label
//! margins and reweighted binary cross-entropy with its analytic gradient.

use alloc::format;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{bce_with_logits, sigmoid, Matrix};

/// β used for the effective number of samples.
pub const DEFAULT_BETA: f64 = 0.9999;
pub const DEFAULT_ALPHA: f64 = 1.0;
pub const DEFAULT_KAPPA: f64 = 0.1;

/// How raw `eff^alpha` weights are rescaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightNormalization {
    /// Rescale so the class-mean weight is 1.
    #[default]
    MeanOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbLossParams {
    pub beta: f64,
    pub alpha: f64,
    /// Margin generator strength.
    pub margin_scale: f64,
    pub weight_normalization: WeightNormalization,
}

impl Default for DbLossParams {
    fn default() -> Self {
        Self {
            beta: DEFAULT_BETA,
            alpha: DEFAULT_ALPHA,
            margin_scale: DEFAULT_KAPPA,
            weight_normalization: WeightNormalization::MeanOne,
        }
    }
}

impl DbLossParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::InvalidParameter(format!(
                "beta must be in [0, 1), got {}",
                self.beta
            )));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "alpha must be >= 0, got {}",
                self.alpha
            )));
        }
        if !(self.margin_scale >= 0.0) || !self.margin_scale.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "margin scale must be >= 0, got {}",
                self.margin_scale
            )));
        }
        Ok(())
    }

    /// Class weights and margins derived from positive counts.
    pub fn weights_and_margins(&self, counts: &[u64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.validate()?;
        let eff = effective_numbers(counts, self.beta)?;
        let w = class_weights(&eff, self.alpha, self.weight_normalization)?;
        let m = margins(counts, self.margin_scale)?;
        Ok((w, m))
    }
}

/// `(1 - beta) / (1 - beta^n)` per class.
///
/// Zero counts are rejected. `1 - beta^n` is evaluated as `-expm1(n ln beta)`
/// so values of beta close to 1 keep full precision.
pub fn effective_numbers(counts: &[u64], beta: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::InvalidParameter(format!("beta must be in [0, 1), got {beta}")));
    }
    counts
        .iter()
        .enumerate()
        .map(|(class, &n)| {
            if n == 0 {
                return Err(Error::ZeroCount { class });
            }
            if beta == 0.0 || n == 1 {
                return Ok(1.0);
            }
            let one_minus_beta = 1.0 - beta;
            let one_minus_pow = -libm::expm1(n as f64 * libm::log(beta));
            Ok(one_minus_beta / one_minus_pow)
        })
        .collect()
}

/// `eff^alpha`, normalized.
pub fn class_weights(eff: &[f64], alpha: f64, norm: WeightNormalization) -> Result<Vec<f64>> {
    if eff.is_empty() {
        return Err(Error::Empty("effective numbers"));
    }
    if let Some(bad) = eff.iter().find(|e| !(**e > 0.0) || !e.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "effective number must be > 0, got {bad}"
        )));
    }
    if alpha == 0.0 {
        return Ok(alloc::vec![1.0; eff.len()]);
    }
    let raw: Vec<f64> = eff.iter().map(|&e| libm::pow(e, alpha)).collect();
    match norm {
        WeightNormalization::MeanOne => {
            let mean = raw.iter().sum::<f64>() / raw.len() as f64;
            Ok(raw.into_iter().map(|w| w / mean).collect())
        }
    }
}

/// `kappa * ln(max_count / count)`; the most frequent class gets 0.
pub fn margins(counts: &[u64], kappa: f64) -> Result<Vec<f64>> {
    if let Some(class) = counts.iter().position(|&n| n == 0) {
        return Err(Error::ZeroCount { class });
    }
    let max = counts.iter().copied().max().unwrap_or(1) as f64;
    Ok(counts
        .iter()
        .map(|&n| {
            if kappa == 0.0 {
                0.0
            } else {
                kappa * libm::log(max / n as f64)
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DbLossResult {
    pub loss: f64,
    /// d loss / d logits, same shape as the logits.
    pub grad_z: Matrix,
}

/// Mean over samples and classes of `w_c * bce(z - y m_c, y)`.
///
/// `y` is expected to be binary. Accumulation is row-major in f64.
pub fn db_loss(z: &Matrix, y: &Matrix, w: &[f64], m: &[f64]) -> Result<DbLossResult> {
    if !z.same_shape(y) {
        return Err(Error::ShapeMismatch {
            what: "labels vs logits",
            expected: z.rows() * z.cols(),
            found: y.rows() * y.cols(),
        });
    }
    let (n, c) = (z.rows(), z.cols());
    for (what, v) in [("class weights", w), ("margins", m)] {
        if v.len() != c {
            return Err(Error::ShapeMismatch {
                what,
                expected: c,
                found: v.len(),
            });
        }
    }
    if w.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::InvalidParameter("class weights must be positive".into()));
    }
    if m.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidParameter("margins must be non-negative".into()));
    }
    if z.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "logits" });
    }
    if n == 0 || c == 0 {
        return Err(Error::Empty("logit matrix"));
    }

    let scale = 1.0 / (n * c) as f64;
    let mut grad = Matrix::zeros(n, c);
    let mut total = 0.0;
    for i in 0..n {
        let (zr, yr) = (z.row(i), y.row(i));
        let gr = grad.row_mut(i);
        for j in 0..c {
            let shifted = zr[j] - yr[j] * m[j];
            total += w[j] * bce_with_logits(shifted, yr[j]);
            gr[j] = w[j] * scale * (sigmoid(shifted) - yr[j]);
        }
    }
    Ok(DbLossResult {
        loss: total * scale,
        grad_z: grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn effective_number_single_sample_is_one() {
        for beta in [0.0, 0.5, 0.9999] {
            assert_eq!(effective_numbers(&[1], beta).unwrap(), [1.0]);
        }
        assert_eq!(effective_numbers(&[1, 1, 1], 0.9).unwrap(), [1.0, 1.0, 1.0]);
        assert_eq!(effective_numbers(&[7, 300], 0.0).unwrap(), [1.0, 1.0]);
    }

    #[test]
    fn effective_number_two_samples() {
        // (1-b)/(1-b^2) = 1/(1+b)
        let e = effective_numbers(&[2], 0.9999).unwrap()[0];
        assert!((e - 1.0 / 1.9999).abs() <= 1e-12, "{e}");
        assert!((e - 0.500_025_001_250_062_5).abs() <= 1e-12);
    }

    #[test]
    fn effective_number_rejects_bad_input() {
        assert_eq!(effective_numbers(&[3, 0], 0.9), Err(Error::ZeroCount { class: 1 }));
        assert!(effective_numbers(&[3], 1.0).is_err());
        assert!(effective_numbers(&[3], -0.1).is_err());
    }

    #[test]
    fn effective_number_decreases_with_count() {
        let counts: Vec<u64> = (1..2000).collect();
        let eff = effective_numbers(&counts, 0.9999).unwrap();
        assert!(eff.windows(2).all(|p| p[1] < p[0]));
    }

    #[test]
    fn weights_mean_one() {
        assert_eq!(
            class_weights(&[0.2, 3.0], 0.0, WeightNormalization::MeanOne).unwrap(),
            [1.0, 1.0]
        );
        let w = class_weights(&[1.0, 4.0], 1.0, WeightNormalization::MeanOne).unwrap();
        assert!((w[0] - 0.4).abs() < 1e-15 && (w[1] - 1.6).abs() < 1e-15);
        let w = class_weights(&[0.3; 3], 2.5, WeightNormalization::MeanOne).unwrap();
        assert!(w.iter().all(|&x| (x - 1.0).abs() < 1e-15));
    }

    #[test]
    fn margin_generator() {
        assert_eq!(margins(&[100, 3], 0.0).unwrap(), [0.0, 0.0]);
        assert_eq!(margins(&[100, 100], 0.3).unwrap(), [0.0, 0.0]);
        let m = margins(&[100, 1], 0.1).unwrap();
        assert_eq!(m[0], 0.0);
        assert!((m[1] - 0.460_517_018_598_809_1).abs() < 1e-12);
        assert_eq!(margins(&[0, 1], 0.1), Err(Error::ZeroCount { class: 0 }));
    }

    #[test]
    fn symmetric_point() {
        let z = Matrix::from_vec(1, 1, alloc::vec![0.0]).unwrap();
        let y = Matrix::from_vec(1, 1, alloc::vec![1.0]).unwrap();
        let r = db_loss(&z, &y, &[1.0], &[0.0]).unwrap();
        assert!((r.loss - core::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(r.grad_z.get(0, 0), -0.5);
    }

    #[test]
    fn large_logits_stay_finite() {
        let z = Matrix::from_vec(2, 2, alloc::vec![500.0, -500.0, -500.0, 500.0]).unwrap();
        let y = Matrix::from_vec(2, 2, alloc::vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let r = db_loss(&z, &y, &[1.0, 2.0], &[0.1, 0.5]).unwrap();
        assert!(r.loss.is_finite());
        assert!(r.grad_z.as_slice().iter().all(|g| g.is_finite()));
    }

    #[test]
    fn shape_and_value_errors() {
        let z = Matrix::zeros(2, 2);
        let y = Matrix::zeros(2, 3);
        assert!(matches!(
            db_loss(&z, &y, &[1.0; 2], &[0.0; 2]),
            Err(Error::ShapeMismatch { .. })
        ));
        let y = Matrix::zeros(2, 2);
        assert!(db_loss(&z, &y, &[1.0], &[0.0; 2]).is_err());
        assert!(db_loss(&z, &y, &[1.0, 0.0], &[0.0; 2]).is_err());
        let mut z = z;
        z.set(0, 0, f64::INFINITY);
        assert_eq!(
            db_loss(&z, &y, &[1.0; 2], &[0.0; 2]),
            Err(Error::NonFinite { what: "logits" })
        );
    }
}
