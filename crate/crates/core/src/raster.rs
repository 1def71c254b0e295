//! Grayscale raster preprocessing and the geometric test-time transforms.
//!
//! Grids are [`Matrix`] values with `rows = height`, `cols = width`. Sampling
//! uses half-pixel centers throughout. Rotation fills out-of-bounds samples
//! with zero; zoom-out pads with zero. Odd crop/pad remainders go to the
//! bottom and right.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Matrix;

pub const IMAGENET_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f64; 3] = [0.229, 0.224, 0.225];
pub const CLIP_MEAN: [f64; 3] = [0.481_454_66, 0.457_827_5, 0.408_210_73];
pub const CLIP_STD: [f64; 3] = [0.268_629_54, 0.261_302_58, 0.275_777_11];

pub const DEFAULT_CLIP_LO: f64 = 1.0;
pub const DEFAULT_CLIP_HI: f64 = 99.0;
pub const TASK1_SIZE: usize = 512;
pub const TASK2_SIZE: usize = 224;

const ROTATION_DEGREES: f64 = 5.0;
const ZOOM_IN: f64 = 1.1;
const ZOOM_OUT: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn max_value(self) -> u16 {
        match self {
            BitDepth::Eight => u8::MAX as u16,
            BitDepth::Sixteen => u16::MAX,
        }
    }
}

/// Row-major grayscale intensities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    width: usize,
    height: usize,
    depth: BitDepth,
    pixels: Vec<u16>,
}

impl Raster {
    pub fn new(width: usize, height: usize, depth: BitDepth, pixels: Vec<u16>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!(
                "raster must be non-empty, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::ShapeMismatch {
                what: "raster pixels",
                expected: width * height,
                found: pixels.len(),
            });
        }
        let max = depth.max_value();
        if let Some(p) = pixels.iter().find(|&&p| p > max) {
            return Err(Error::InvalidParameter(format!("intensity {p} exceeds {max}")));
        }
        Ok(Self {
            width,
            height,
            depth,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn depth(&self) -> BitDepth {
        self.depth
    }

    pub fn pixels(&self) -> &[u16] {
        &self.pixels
    }
}

/// Nearest-rank percentile of an ascending slice; `pct = 0` gives the minimum.
pub fn nearest_rank(sorted: &[u16], pct: f64) -> u16 {
    let n = sorted.len();
    let rank = libm::ceil(pct / 100.0 * n as f64) as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Clips to the `[lo_pct, hi_pct]` percentiles and rescales into `[0, 1]`.
/// A degenerate range yields all zeros.
pub fn percentile_clip_rescale(r: &Raster, lo_pct: f64, hi_pct: f64) -> Result<Matrix> {
    if !(0.0 <= lo_pct && lo_pct < hi_pct && hi_pct <= 100.0) {
        return Err(Error::InvalidParameter(format!(
            "percentile bounds must satisfy 0 <= lo < hi <= 100, got ({lo_pct}, {hi_pct})"
        )));
    }
    let mut sorted = r.pixels.clone();
    sorted.sort_unstable();
    let q_lo = f64::from(nearest_rank(&sorted, lo_pct));
    let q_hi = f64::from(nearest_rank(&sorted, hi_pct));
    let data = if q_hi == q_lo {
        vec![0.0; r.pixels.len()]
    } else {
        let span = q_hi - q_lo;
        r.pixels
            .iter()
            .map(|&p| ((f64::from(p) - q_lo) / span).clamp(0.0, 1.0))
            .collect()
    };
    Matrix::from_vec(r.height, r.width, data)
}

/// Divides by 255 or 65535 depending on bit depth.
pub fn normalize_clip_style(r: &Raster) -> Matrix {
    let max = f64::from(r.depth.max_value());
    let data = r.pixels.iter().map(|&p| f64::from(p) / max).collect();
    Matrix::from_vec(r.height, r.width, data).expect("raster shape is consistent")
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    (a + (b - a) * t).clamp(a.min(b), a.max(b))
}

/// Source coordinate and neighbor pair for output index `d`, edge-clamped.
fn source_axis(d: usize, in_len: usize, out_len: usize) -> (usize, usize, f64) {
    let src = (d as f64 + 0.5) * in_len as f64 / out_len as f64 - 0.5;
    let src = src.clamp(0.0, (in_len - 1) as f64);
    let i0 = libm::floor(src) as usize;
    let i1 = (i0 + 1).min(in_len - 1);
    (i0, i1, src - i0 as f64)
}

/// Bilinear resize with half-pixel centers and edge clamping.
pub fn resize_bilinear(grid: &Matrix, out_h: usize, out_w: usize) -> Result<Matrix> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidParameter(format!(
            "output size must be positive, got {out_h}x{out_w}"
        )));
    }
    if grid.rows() == 0 || grid.cols() == 0 {
        return Err(Error::Empty("grid"));
    }
    let cols: Vec<_> = (0..out_w).map(|x| source_axis(x, grid.cols(), out_w)).collect();
    let mut out = Matrix::zeros(out_h, out_w);
    for y in 0..out_h {
        let (r0, r1, fy) = source_axis(y, grid.rows(), out_h);
        let (top, bottom) = (grid.row(r0), grid.row(r1));
        for (o, &(c0, c1, fx)) in out.row_mut(y).iter_mut().zip(&cols) {
            *o = lerp(lerp(top[c0], top[c1], fx), lerp(bottom[c0], bottom[c1], fx), fy);
        }
    }
    Ok(out)
}

/// Bilinear sample at continuous pixel-index coordinates; neighbors outside
/// the grid read as zero.
fn sample_zero_fill(grid: &Matrix, sx: f64, sy: f64) -> f64 {
    let x0 = libm::floor(sx);
    let y0 = libm::floor(sy);
    let (fx, fy) = (sx - x0, sy - y0);
    let at = |x: f64, y: f64| -> f64 {
        if x < 0.0 || y < 0.0 || x >= grid.cols() as f64 || y >= grid.rows() as f64 {
            0.0
        } else {
            grid.get(y as usize, x as usize)
        }
    };
    let top = at(x0, y0) * (1.0 - fx) + at(x0 + 1.0, y0) * fx;
    let bottom = at(x0, y0 + 1.0) * (1.0 - fx) + at(x0 + 1.0, y0 + 1.0) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Rotates about the image center by `degrees` (positive is counterclockwise
/// as displayed, with rows growing downward).
pub fn rotate(grid: &Matrix, degrees: f64) -> Matrix {
    let theta = degrees.to_radians();
    let (sin, cos) = (libm::sin(theta), libm::cos(theta));
    let (h, w) = (grid.rows(), grid.cols());
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let mut out = Matrix::zeros(h, w);
    for r in 0..h {
        let y = r as f64 + 0.5 - cy;
        for c in 0..w {
            let x = c as f64 + 0.5 - cx;
            // Inverse map: rotate the output point back by -theta. With y
            // pointing down a visual CCW turn is a clockwise matrix rotation.
            let xs = cos * x - sin * y;
            let ys = sin * x + cos * y;
            out.set(r, c, sample_zero_fill(grid, xs + cx - 0.5, ys + cy - 0.5));
        }
    }
    out
}

pub fn hflip(grid: &Matrix) -> Matrix {
    let mut out = grid.clone();
    for r in 0..out.rows() {
        out.row_mut(r).reverse();
    }
    out
}

fn scaled_len(len: usize, factor: f64) -> usize {
    (libm::round(len as f64 * factor) as usize).max(1)
}

/// Scales by `factor` then center-crops (factor > 1) or zero-pads (factor < 1)
/// back to the original size.
pub fn zoom(grid: &Matrix, factor: f64) -> Result<Matrix> {
    let (h, w) = (grid.rows(), grid.cols());
    let (sh, sw) = (scaled_len(h, factor), scaled_len(w, factor));
    let scaled = resize_bilinear(grid, sh, sw)?;
    let mut out = Matrix::zeros(h, w);
    // Signed offset of the scaled image's top-left corner inside the output.
    let off_y = (h as isize - sh as isize).div_euclid(2);
    let off_x = (w as isize - sw as isize).div_euclid(2);
    for r in 0..h {
        let sr = r as isize - off_y;
        if sr < 0 || sr >= sh as isize {
            continue;
        }
        for c in 0..w {
            let sc = c as isize - off_x;
            if sc >= 0 && sc < sw as isize {
                out.set(r, c, scaled.get(sr as usize, sc as usize));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TtaTransform {
    Identity,
    HFlip,
    RotPlus5,
    RotMinus5,
    ZoomIn,
    ZoomOut,
}

impl TtaTransform {
    pub const ALL: [TtaTransform; 6] = [
        TtaTransform::Identity,
        TtaTransform::HFlip,
        TtaTransform::RotPlus5,
        TtaTransform::RotMinus5,
        TtaTransform::ZoomIn,
        TtaTransform::ZoomOut,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TtaTransform::Identity => "identity",
            TtaTransform::HFlip => "hflip",
            TtaTransform::RotPlus5 => "rot+5",
            TtaTransform::RotMinus5 => "rot-5",
            TtaTransform::ZoomIn => "zoom1.1",
            TtaTransform::ZoomOut => "zoom0.9",
        }
    }

    pub fn apply(self, grid: &Matrix) -> Result<Matrix> {
        Ok(match self {
            TtaTransform::Identity => grid.clone(),
            TtaTransform::HFlip => hflip(grid),
            TtaTransform::RotPlus5 => rotate(grid, ROTATION_DEGREES),
            TtaTransform::RotMinus5 => rotate(grid, -ROTATION_DEGREES),
            TtaTransform::ZoomIn => zoom(grid, ZOOM_IN)?,
            TtaTransform::ZoomOut => zoom(grid, ZOOM_OUT)?,
        })
    }
}

impl fmt::Display for TtaTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TtaTransform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TtaTransform::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown TTA transform `{s}`")))
    }
}

/// Ordered, duplicate-free, non-empty set of transforms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TtaSpec {
    transforms: Vec<TtaTransform>,
}

impl TtaSpec {
    pub fn new(transforms: Vec<TtaTransform>) -> Result<Self> {
        if transforms.is_empty() {
            return Err(Error::Empty("tta transforms"));
        }
        for (i, t) in transforms.iter().enumerate() {
            if transforms[..i].contains(t) {
                return Err(Error::InvalidParameter(format!("duplicate TTA transform `{t}`")));
            }
        }
        Ok(Self { transforms })
    }

    /// Parses a comma-separated list such as `identity,hflip,rot+5`.
    pub fn parse(list: &str) -> Result<Self> {
        let transforms = list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<_>>>()?;
        Self::new(transforms)
    }

    pub fn transforms(&self) -> &[TtaTransform] {
        &self.transforms
    }
}

impl Default for TtaSpec {
    fn default() -> Self {
        Self {
            transforms: TtaTransform::ALL.to_vec(),
        }
    }
}

/// One output per transform, each the input's size.
pub fn apply_tta(grid: &Matrix, spec: &TtaSpec) -> Result<Vec<Matrix>> {
    spec.transforms.iter().map(|t| t.apply(grid)).collect()
}

/// Three identical channels, each normalized by its mean and std. CHW order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl Tensor3 {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let plane = self.height * self.width;
        &self.values[c * plane..(c + 1) * plane]
    }
}

pub fn to_tensor3(grid: &Matrix, mean: [f64; 3], std: [f64; 3]) -> Result<Tensor3> {
    if let Some(s) = std.iter().find(|s| !(**s > 0.0)) {
        return Err(Error::InvalidParameter(format!("std must be positive, got {s}")));
    }
    let mut values = Vec::with_capacity(3 * grid.as_slice().len());
    for c in 0..3 {
        values.extend(grid.as_slice().iter().map(|&v| (v - mean[c]) / std[c]));
    }
    Ok(Tensor3 {
        height: grid.rows(),
        width: grid.cols(),
        values,
    })
}

/// Which preprocessing recipe to follow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    /// Percentile clip, resize, ImageNet normalization.
    Classification,
    /// Bit-depth scaling, resize, CLIP normalization.
    ZeroShot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    pub task: Task,
    pub clip_lo: f64,
    pub clip_hi: f64,
    pub size: usize,
    pub tta: TtaSpec,
}

impl PreprocessConfig {
    pub fn for_task(task: Task) -> Self {
        let size = match task {
            Task::Classification => TASK1_SIZE,
            Task::ZeroShot => TASK2_SIZE,
        };
        let tta = match task {
            Task::Classification => TtaSpec::default(),
            Task::ZeroShot => TtaSpec::new(vec![TtaTransform::Identity]).expect("non-empty"),
        };
        Self {
            task,
            clip_lo: DEFAULT_CLIP_LO,
            clip_hi: DEFAULT_CLIP_HI,
            size,
            tta,
        }
    }
}

/// A named network input produced by [`preprocess`].
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedView {
    pub transform: TtaTransform,
    pub tensor: Tensor3,
}

/// Full recipe: intensity scaling, square resize, TTA on the `[0, 1]` grid,
/// then channel replication and mean/std normalization.
pub fn preprocess(r: &Raster, cfg: &PreprocessConfig) -> Result<Vec<PreparedView>> {
    let (grid, mean, std) = match cfg.task {
        Task::Classification => (
            percentile_clip_rescale(r, cfg.clip_lo, cfg.clip_hi)?,
            IMAGENET_MEAN,
            IMAGENET_STD,
        ),
        Task::ZeroShot => (normalize_clip_style(r), CLIP_MEAN, CLIP_STD),
    };
    let resized = resize_bilinear(&grid, cfg.size, cfg.size)?;
    cfg.tta
        .transforms()
        .iter()
        .map(|&t| {
            Ok(PreparedView {
                transform: t,
                tensor: to_tensor3(&t.apply(&resized)?, mean, std)?,
            })
        })
        .collect()
}

/// Names of a spec's transforms, in order.
pub fn transform_names(spec: &TtaSpec) -> Vec<String> {
    spec.transforms().iter().map(|t| String::from(t.name())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn raster_invariants() {
        assert!(Raster::new(0, 1, BitDepth::Eight, vec![]).is_err());
        assert!(Raster::new(1, 1, BitDepth::Eight, vec![256]).is_err());
        assert!(Raster::new(2, 1, BitDepth::Sixteen, vec![65535]).is_err());
        assert!(Raster::new(1, 1, BitDepth::Sixteen, vec![65535]).is_ok());
    }

    #[test]
    fn constant_raster_clips_to_zero() {
        let r = Raster::new(3, 2, BitDepth::Eight, vec![77; 6]).unwrap();
        let g = percentile_clip_rescale(&r, 1.0, 99.0).unwrap();
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn full_range_rescale() {
        let r = Raster::new(256, 1, BitDepth::Eight, (0..=255).collect()).unwrap();
        let g = percentile_clip_rescale(&r, 0.0, 100.0).unwrap();
        assert_eq!(g.get(0, 0), 0.0);
        assert_eq!(g.get(0, 255), 1.0);
        assert!((g.get(0, 51) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn percentile_matches_nearest_rank_by_hand() {
        // sorted {0,0,0,100}: 1st percentile -> rank ceil(0.04)=1 -> 0,
        // 99th -> rank ceil(3.96)=4 -> 100.
        let r = Raster::new(2, 2, BitDepth::Eight, vec![0, 100, 0, 0]).unwrap();
        let g = percentile_clip_rescale(&r, 1.0, 99.0).unwrap();
        assert_eq!(g.as_slice(), &[0.0, 1.0, 0.0, 0.0]);
        assert!(percentile_clip_rescale(&r, 50.0, 50.0).is_err());
        assert!(percentile_clip_rescale(&r, -1.0, 50.0).is_err());
        assert!(percentile_clip_rescale(&r, 1.0, 101.0).is_err());
    }

    #[test]
    fn bit_depth_scaling() {
        let r8 = Raster::new(1, 1, BitDepth::Eight, vec![255]).unwrap();
        assert_eq!(normalize_clip_style(&r8).get(0, 0), 1.0);
        let r16 = Raster::new(2, 1, BitDepth::Sixteen, vec![65535, 32768]).unwrap();
        let g = normalize_clip_style(&r16);
        assert_eq!(g.get(0, 0), 1.0);
        assert!((g.get(0, 1) - 32768.0 / 65535.0).abs() < 1e-15);
        assert!((g.get(0, 1) - 0.500_007_6).abs() < 1e-7);
    }

    #[test]
    fn resize_examples() {
        let g = grid(&[&[0.1, 0.7, 0.3], &[0.9, 0.2, 0.5]]);
        assert_eq!(resize_bilinear(&g, 2, 3).unwrap(), g);
        let c = Matrix::from_vec(3, 3, vec![0.4; 9]).unwrap();
        assert!(resize_bilinear(&c, 7, 5).unwrap().as_slice().iter().all(|&v| v == 0.4));
        let r = resize_bilinear(&grid(&[&[0.0, 1.0], &[0.0, 1.0]]), 2, 3).unwrap();
        assert_eq!(r.row(0), &[0.0, 0.5, 1.0]);
        assert_eq!(r.row(1), &[0.0, 0.5, 1.0]);
        assert!(resize_bilinear(&g, 0, 3).is_err());
    }

    #[test]
    fn tensor_examples() {
        let g = grid(&[&[0.2, 1.0]]);
        let t = to_tensor3(&g, [0.0; 3], [1.0; 3]).unwrap();
        for c in 0..3 {
            assert_eq!(t.channel(c), g.as_slice());
        }
        let t = to_tensor3(
            &Matrix::from_vec(1, 2, vec![0.485; 2]).unwrap(),
            IMAGENET_MEAN,
            IMAGENET_STD,
        )
        .unwrap();
        assert!(t.channel(0).iter().all(|v| v.abs() < 1e-15));
        let t = to_tensor3(&Matrix::from_vec(1, 1, vec![1.0]).unwrap(), [0.5; 3], [0.25; 3]).unwrap();
        assert_eq!(t.values(), &[2.0, 2.0, 2.0]);
        assert!(to_tensor3(&g, [0.0; 3], [1.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn tta_identity_and_flip() {
        let g = grid(&[&[0.1, 0.2, 0.3], &[0.4, 0.5, 0.6]]);
        let spec = TtaSpec::new(vec![TtaTransform::Identity]).unwrap();
        assert_eq!(apply_tta(&g, &spec).unwrap(), vec![g.clone()]);
        assert_eq!(hflip(&g).row(0), &[0.3, 0.2, 0.1]);
        assert_eq!(hflip(&hflip(&g)), g);
    }

    #[test]
    fn rotation_of_constant_field() {
        let c = Matrix::from_vec(20, 20, vec![0.7; 400]).unwrap();
        let r = rotate(&c, 5.0);
        // Interior samples have all four neighbors in bounds.
        for y in 3..17 {
            for x in 3..17 {
                assert!((r.get(y, x) - 0.7).abs() < 1e-12);
            }
        }
        // A corner maps outside the source and picks up zero fill.
        assert!(r.get(0, 0) < 0.7);
    }

    #[test]
    fn rotation_direction() {
        // A bright pixel right of center moves up under a CCW turn.
        let mut g = Matrix::zeros(41, 41);
        g.set(20, 35, 1.0);
        let r = rotate(&g, 90.0);
        let (mut best, mut at) = (0.0, (0, 0));
        for y in 0..41 {
            for x in 0..41 {
                if r.get(y, x) > best {
                    best = r.get(y, x);
                    at = (y, x);
                }
            }
        }
        assert_eq!(at, (5, 20));
    }

    #[test]
    fn zoom_keeps_size_and_pads_with_zero() {
        let c = Matrix::from_vec(10, 10, vec![0.5; 100]).unwrap();
        let out = zoom(&c, 0.9).unwrap();
        assert_eq!((out.rows(), out.cols()), (10, 10));
        // 10 * 0.9 = 9: one pad row/column, placed at the bottom/right.
        assert_eq!(out.get(0, 0), 0.5);
        assert_eq!(out.get(9, 0), 0.0);
        assert_eq!(out.get(0, 9), 0.0);
        let out = zoom(&c, 1.1).unwrap();
        assert_eq!((out.rows(), out.cols()), (10, 10));
        assert!(out.as_slice().iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn tta_spec_parsing() {
        let s = TtaSpec::parse("identity,hflip,rot+5,rot-5,zoom1.1,zoom0.9").unwrap();
        assert_eq!(s, TtaSpec::default());
        assert!(TtaSpec::parse("").is_err());
        assert!(TtaSpec::parse("hflip,hflip").is_err());
        assert!(TtaSpec::parse("rot+10").is_err());
    }

    #[test]
    fn preprocess_produces_one_view_per_transform() {
        let r = Raster::new(6, 4, BitDepth::Sixteen, (0..24).map(|v| v * 1000).collect()).unwrap();
        let mut cfg = PreprocessConfig::for_task(Task::Classification);
        cfg.size = 8;
        let views = preprocess(&r, &cfg).unwrap();
        assert_eq!(views.len(), 6);
        for v in &views {
            assert_eq!((v.tensor.height(), v.tensor.width()), (8, 8));
            assert_eq!(v.tensor.values().len(), 3 * 64);
        }
        let cfg = PreprocessConfig {
            size: 5,
            ..PreprocessConfig::for_task(Task::ZeroShot)
        };
        let views = preprocess(&r, &cfg).unwrap();
        assert_eq!(views.len(), 1);
        assert_eq!(views[0].transform, TtaTransform::Identity);
    }
}
