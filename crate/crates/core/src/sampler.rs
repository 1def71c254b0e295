//! Repeat-factor class-aware sampling.
//!
//! Each class gets `r(c) = max(1, sqrt(T / f_c))`; each sample inherits the
//! factor of its rarest positive class, capped at `r_max`. An epoch repeats
//! sample `i` `floor(r_i)` times plus once more with probability
//! `frac(r_i)`, then shuffles.
//!
//! Randomness comes from ChaCha8 seeded with `seed_from_u64`. The extra-copy
//! decision draws one `f64` in `[0, 1)` per sample with a fractional factor,
//! in index order; the shuffle is `rand`'s Fisher-Yates over the whole list.

use alloc::format;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::LabelMatrix;
use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.001;
pub const DEFAULT_R_MAX: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub threshold: f64,
    pub r_max: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            r_max: DEFAULT_R_MAX,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "threshold must be in (0, 1], got {}",
                self.threshold
            )));
        }
        if !(self.r_max >= 1.0) || !self.r_max.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "r_max must be >= 1, got {}",
                self.r_max
            )));
        }
        Ok(())
    }
}

/// Class repeat factors, plus the indices of classes with no positives
/// (which get factor 1).
#[derive(Debug, Clone, PartialEq)]
pub struct ClassRepeatFactors {
    pub factors: Vec<f64>,
    pub empty_classes: Vec<usize>,
}

pub fn class_repeat_factors(frequencies: &[f64], cfg: &SamplerConfig) -> Result<ClassRepeatFactors> {
    cfg.validate()?;
    let mut empty_classes = Vec::new();
    let mut factors = Vec::with_capacity(frequencies.len());
    for (c, &f) in frequencies.iter().enumerate() {
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::InvalidParameter(format!("frequency of class {c} is {f}")));
        }
        if f == 0.0 {
            empty_classes.push(c);
            factors.push(1.0);
        } else {
            factors.push(libm::sqrt(cfg.threshold / f).max(1.0));
        }
    }
    Ok(ClassRepeatFactors { factors, empty_classes })
}

/// `min(r_max, max over positive classes of r(c))`, 1 for all-negative samples.
pub fn sample_repeat_factors(labels: &LabelMatrix, class_factors: &[f64], cfg: &SamplerConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if class_factors.len() != labels.n_classes() {
        return Err(Error::ShapeMismatch {
            what: "class repeat factors",
            expected: labels.n_classes(),
            found: class_factors.len(),
        });
    }
    Ok((0..labels.n_samples())
        .map(|i| {
            let rarest = labels
                .row(i)
                .iter()
                .zip(class_factors)
                .filter(|(&y, _)| y == 1)
                .map(|(_, &r)| r)
                .fold(1.0_f64, f64::max);
            rarest.min(cfg.r_max)
        })
        .collect())
}

/// One epoch of sample indices (with repeats).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochPlan {
    pub indices: Vec<usize>,
    pub epoch_len: usize,
}

/// Stream of epoch plans drawn from one seeded generator.
#[derive(Debug, Clone)]
pub struct EpochSampler {
    repeat: Vec<f64>,
    rng: ChaCha8Rng,
}

impl EpochSampler {
    pub fn new(repeat: Vec<f64>, seed: u64) -> Result<Self> {
        if let Some(bad) = repeat.iter().find(|r| !(**r >= 1.0) || !r.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "repeat factors must be >= 1, got {bad}"
            )));
        }
        Ok(Self {
            repeat,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Every sample once, shuffled.
    pub fn uniform(n: usize, seed: u64) -> Self {
        Self {
            repeat: alloc::vec![1.0; n],
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn next_epoch(&mut self) -> EpochPlan {
        let mut indices = Vec::with_capacity(self.repeat.len());
        for (i, &r) in self.repeat.iter().enumerate() {
            let whole = libm::floor(r);
            let frac = r - whole;
            let mut copies = whole as usize;
            if frac > 0.0 && self.rng.random::<f64>() < frac {
                copies += 1;
            }
            indices.extend(core::iter::repeat_n(i, copies));
        }
        indices.shuffle(&mut self.rng);
        let epoch_len = indices.len();
        EpochPlan { indices, epoch_len }
    }
}

/// First epoch of an [`EpochSampler`] seeded with `cfg.seed`.
pub fn build_epoch(repeat: &[f64], cfg: &SamplerConfig) -> Result<EpochPlan> {
    Ok(EpochSampler::new(repeat.to_vec(), cfg.seed)?.next_epoch())
}
