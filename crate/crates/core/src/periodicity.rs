//! Quadrant-wise spatial autocorrelation and the periodicity loss built on it.
//!
//! For one channel plane `x` of a block with `N` pixels, mean `μ` and
//! population variance `σ²`, the autocorrelation at lag `Δ` along an axis is
//!
//! ```text
//! A(Δ) = Σ_p (x[p] − μ)(x[p + Δ] − μ) / (M · σ²)
//! ```
//!
//! where the sum runs over the `M` positions whose shifted partner is inside
//! the block. Blocks with `σ² < 1e-12` have `A = 0` for every lag.
//!
//! The loss averages `(A(pred) − A(gt))²` over quadrants, channels, lags and
//! both axes with the normalizer `1 / (2·Q·C·|K|)`. The ground truth only
//! supplies target values; no derivative flows into it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// Variance below which a block counts as constant.
pub const FLAT_VARIANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    /// Lag along columns (horizontal shift).
    H,
    /// Lag along rows (vertical shift).
    V,
}

impl Axis {
    pub const BOTH: [Axis; 2] = [Axis::H, Axis::V];
}

/// Lag set, quadrant layout and axes of the loss.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LagSpec {
    pub lags: Vec<usize>,
    /// 4 for the 2×2 quadrant layout, 1 for a single global block.
    pub quadrants: usize,
}

impl Default for LagSpec {
    fn default() -> Self {
        Self {
            lags: vec![8, 16, 24, 32, 40],
            quadrants: 4,
        }
    }
}

impl LagSpec {
    pub fn new(lags: Vec<usize>, quadrants: usize) -> Result<Self> {
        let spec = Self { lags, quadrants };
        spec.validate()?;
        Ok(spec)
    }

    /// Five evenly spaced lags `period/4 · {1, …, 5}`, the default set's shape
    /// rescaled to another artifact period. `period` must be a multiple of 4.
    pub fn for_period(period: usize) -> Result<Self> {
        if period == 0 || !period.is_multiple_of(4) {
            return Err(Error::InvalidArgument(format!(
                "period {period} must be a positive multiple of 4"
            )));
        }
        Self::new((1..=5).map(|k| k * period / 4).collect(), 4)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lags.is_empty() || self.lags.contains(&0) {
            return Err(Error::InvalidArgument("lags must be a non-empty set of positive integers".into()));
        }
        let mut sorted = self.lags.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.lags.len() {
            return Err(Error::InvalidArgument("lags must be distinct".into()));
        }
        if !matches!(self.quadrants, 1 | 4) {
            return Err(Error::InvalidArgument(format!(
                "quadrant count must be 1 or 4, got {}",
                self.quadrants
            )));
        }
        Ok(())
    }

    fn max_lag(&self) -> usize {
        self.lags.iter().copied().max().unwrap_or(0)
    }
}

/// Location of one block inside the parent image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockRect {
    pub row0: usize,
    pub col0: usize,
    pub rows: usize,
    pub cols: usize,
}

/// 2×2 split; the top row and left column of blocks take the ceiling on odd
/// extents. Order: top-left, top-right, bottom-left, bottom-right.
pub fn quadrant_rects(height: usize, width: usize) -> Result<[BlockRect; 4]> {
    if height < 2 || width < 2 {
        return Err(Error::InvalidArgument(format!(
            "quadrant split needs at least 2x2 pixels, got {height}x{width}"
        )));
    }
    let (top, left) = (height.div_ceil(2), width.div_ceil(2));
    let (bottom, right) = (height - top, width - left);
    Ok([
        BlockRect { row0: 0, col0: 0, rows: top, cols: left },
        BlockRect { row0: 0, col0: left, rows: top, cols: right },
        BlockRect { row0: top, col0: 0, rows: bottom, cols: left },
        BlockRect { row0: top, col0: left, rows: bottom, cols: right },
    ])
}

fn block_rects(height: usize, width: usize, quadrants: usize) -> Result<Vec<BlockRect>> {
    match quadrants {
        1 => Ok(vec![BlockRect { row0: 0, col0: 0, rows: height, cols: width }]),
        _ => Ok(quadrant_rects(height, width)?.to_vec()),
    }
}

pub fn quadrant_partition(img: &Image) -> Result<[Image; 4]> {
    let rects = quadrant_rects(img.height(), img.width())?;
    let crop = |r: &BlockRect| img.crop(r.row0, r.col0, r.rows, r.cols);
    Ok([crop(&rects[0])?, crop(&rects[1])?, crop(&rects[2])?, crop(&rects[3])?])
}

/// Borrowed view of one channel of a rectangular block.
#[derive(Clone, Copy)]
struct PlaneView<'a> {
    img: &'a Image,
    rect: BlockRect,
    channel: usize,
}

impl PlaneView<'_> {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.img.get(self.rect.row0 + r, self.rect.col0 + c, self.channel)
    }

    fn extent(&self, axis: Axis) -> usize {
        match axis {
            Axis::H => self.rect.cols,
            Axis::V => self.rect.rows,
        }
    }

    fn stats(&self) -> (f64, f64) {
        let n = (self.rect.rows * self.rect.cols) as f64;
        let mut sum = 0.0;
        for r in 0..self.rect.rows {
            for c in 0..self.rect.cols {
                sum += self.at(r, c);
            }
        }
        let mu = sum / n;
        let mut ss = 0.0;
        for r in 0..self.rect.rows {
            for c in 0..self.rect.cols {
                let d = self.at(r, c) - mu;
                ss += d * d;
            }
        }
        (mu, ss / n)
    }

    /// Rows/cols of the first element of every valid pair.
    fn pair_ranges(&self, axis: Axis, lag: usize) -> (usize, usize, usize, usize) {
        match axis {
            Axis::H => (self.rect.rows, self.rect.cols - lag, 0, lag),
            Axis::V => (self.rect.rows - lag, self.rect.cols, lag, 0),
        }
    }

    fn autocorr(&self, axis: Axis, lag: usize) -> f64 {
        let (mu, var) = self.stats();
        self.autocorr_with(axis, lag, mu, var)
    }

    fn autocorr_with(&self, axis: Axis, lag: usize, mu: f64, var: f64) -> f64 {
        if var < FLAT_VARIANCE {
            return 0.0;
        }
        let (rows, cols, dr, dc) = self.pair_ranges(axis, lag);
        let mut s = 0.0;
        for r in 0..rows {
            for c in 0..cols {
                s += (self.at(r, c) - mu) * (self.at(r + dr, c + dc) - mu);
            }
        }
        s / ((rows * cols) as f64 * var)
    }

    /// Adds `scale · ∂A/∂x` into `grad` (parent-image layout).
    fn accumulate_grad(&self, axis: Axis, lag: usize, mu: f64, var: f64, scale: f64, grad: &mut [f64]) {
        if var < FLAT_VARIANCE {
            return;
        }
        let n = (self.rect.rows * self.rect.cols) as f64;
        let (rows, cols, dr, dc) = self.pair_ranges(axis, lag);
        let m = (rows * cols) as f64;
        // S and T = Σ_pairs [(x_p − μ) + (x_{p+Δ} − μ)]
        let (mut s, mut t) = (0.0, 0.0);
        for r in 0..rows {
            for c in 0..cols {
                let (a, b) = (self.at(r, c) - mu, self.at(r + dr, c + dc) - mu);
                s += a * b;
                t += a + b;
            }
        }
        let inv = 1.0 / (m * var);
        let var_coef = s / (m * var * var) * 2.0 / n;
        let idx = |r: usize, c: usize| self.img.index(self.rect.row0 + r, self.rect.col0 + c, self.channel);
        // ∂S/∂x_k = partner terms − T/N ; ∂σ²/∂x_k = 2(x_k − μ)/N
        for r in 0..self.rect.rows {
            for c in 0..self.rect.cols {
                let centered = self.at(r, c) - mu;
                let mut ds = -t / n;
                if r + dr < self.rect.rows && c + dc < self.rect.cols {
                    ds += self.at(r + dr, c + dc) - mu;
                }
                if r >= dr && c >= dc {
                    ds += self.at(r - dr, c - dc) - mu;
                }
                grad[idx(r, c)] += scale * (ds * inv - var_coef * centered);
            }
        }
    }
}

/// Unbiased autocorrelation of one channel of `block` at `lag` along `axis`.
/// `lag = 0` is accepted and returns 1 for any non-constant block.
pub fn autocorrelation(block: &Image, channel: usize, axis: Axis, lag: usize) -> Result<f64> {
    if channel >= block.channels() {
        return Err(Error::OutOfRange(format!(
            "channel {channel} of a {}-channel block",
            block.channels()
        )));
    }
    let view = PlaneView {
        img: block,
        rect: BlockRect { row0: 0, col0: 0, rows: block.height(), cols: block.width() },
        channel,
    };
    if lag >= view.extent(axis) {
        return Err(Error::OutOfRange(format!(
            "lag {lag} must be smaller than the block extent {} along {axis:?}",
            view.extent(axis)
        )));
    }
    Ok(view.autocorr(axis, lag))
}

/// One evaluated autocorrelation term of the loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AutocorrTerm {
    pub quadrant: usize,
    pub channel: usize,
    pub lag: usize,
    pub axis: Axis,
    pub value: f64,
}

/// Autocorrelation values of an image for every `(q, c, Δ, axis)`, in that
/// nesting order. These are the frozen targets when the image is ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct AutocorrProfile {
    shape: (usize, usize, usize),
    spec: LagSpec,
    terms: Vec<AutocorrTerm>,
}

impl AutocorrProfile {
    pub fn compute(img: &Image, spec: &LagSpec) -> Result<Self> {
        let rects = checked_rects(img, spec)?;
        let mut terms = Vec::with_capacity(rects.len() * img.channels() * spec.lags.len() * 2);
        for (q, rect) in rects.iter().enumerate() {
            for channel in 0..img.channels() {
                let view = PlaneView { img, rect: *rect, channel };
                let (mu, var) = view.stats();
                for &lag in &spec.lags {
                    for axis in Axis::BOTH {
                        terms.push(AutocorrTerm {
                            quadrant: q,
                            channel,
                            lag,
                            axis,
                            value: view.autocorr_with(axis, lag, mu, var),
                        });
                    }
                }
            }
        }
        Ok(Self { shape: img.shape(), spec: spec.clone(), terms })
    }

    pub fn terms(&self) -> &[AutocorrTerm] {
        &self.terms
    }

    pub fn spec(&self) -> &LagSpec {
        &self.spec
    }
}

fn checked_rects(img: &Image, spec: &LagSpec) -> Result<Vec<BlockRect>> {
    spec.validate()?;
    let rects = block_rects(img.height(), img.width(), spec.quadrants)?;
    let min_extent = rects.iter().map(|r| r.rows.min(r.cols)).min().unwrap_or(0);
    if spec.max_lag() >= min_extent {
        return Err(Error::OutOfRange(format!(
            "lag {} must be smaller than the smallest block extent {min_extent}",
            spec.max_lag()
        )));
    }
    Ok(rects)
}

fn check_pair(pred: &Image, target: &AutocorrProfile) -> Result<()> {
    if pred.shape() != target.shape {
        return Err(Error::ShapeMismatch(format!(
            "prediction {:?} vs ground truth {:?}",
            pred.shape(),
            target.shape
        )));
    }
    Ok(())
}

fn normalizer(spec: &LagSpec, channels: usize) -> f64 {
    1.0 / (2.0 * spec.quadrants as f64 * channels as f64 * spec.lags.len() as f64)
}

/// Periodicity loss of `pred` against frozen ground-truth autocorrelations.
pub fn l_ap_against(pred: &Image, target: &AutocorrProfile) -> Result<f64> {
    check_pair(pred, target)?;
    let p = AutocorrProfile::compute(pred, &target.spec)?;
    let sum: f64 = p
        .terms
        .iter()
        .zip(&target.terms)
        .map(|(a, b)| (a.value - b.value).powi(2))
        .sum();
    Ok(sum * normalizer(&target.spec, pred.channels()))
}

/// Periodicity loss between a prediction and its ground truth.
pub fn l_ap(pred: &Image, gt: &Image, spec: &LagSpec) -> Result<f64> {
    if pred.shape() != gt.shape() {
        return Err(Error::ShapeMismatch(format!(
            "prediction {:?} vs ground truth {:?}",
            pred.shape(),
            gt.shape()
        )));
    }
    l_ap_against(pred, &AutocorrProfile::compute(gt, spec)?)
}

/// Loss value and its exact gradient with respect to every prediction sample.
pub fn l_ap_with_gradient_against(pred: &Image, target: &AutocorrProfile) -> Result<(f64, Image)> {
    check_pair(pred, target)?;
    let spec = &target.spec;
    let rects = checked_rects(pred, spec)?;
    let norm = normalizer(spec, pred.channels());
    let mut grad = vec![0.0; pred.data().len()];
    let mut loss = 0.0;
    let mut terms = target.terms.iter();
    for rect in &rects {
        for channel in 0..pred.channels() {
            let view = PlaneView { img: pred, rect: *rect, channel };
            let (mu, var) = view.stats();
            for &lag in &spec.lags {
                for axis in Axis::BOTH {
                    let gt_value = terms.next().expect("profile matches spec").value;
                    let a = view.autocorr_with(axis, lag, mu, var);
                    let diff = a - gt_value;
                    loss += diff * diff;
                    view.accumulate_grad(axis, lag, mu, var, 2.0 * norm * diff, &mut grad);
                }
            }
        }
    }
    let (h, w, c) = pred.shape();
    Ok((loss * norm, Image::new(h, w, c, grad)?))
}

pub fn l_ap_gradient(pred: &Image, gt: &Image, spec: &LagSpec) -> Result<Image> {
    if pred.shape() != gt.shape() {
        return Err(Error::ShapeMismatch(format!(
            "prediction {:?} vs ground truth {:?}",
            pred.shape(),
            gt.shape()
        )));
    }
    Ok(l_ap_with_gradient_against(pred, &AutocorrProfile::compute(gt, spec)?)?.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{rng_stream, Seed};
    use proptest::prelude::*;

    fn noise(seed: u64, h: usize, w: usize, c: usize) -> Image {
        let mut rng = rng_stream(Seed(seed));
        Image::from_fn(h, w, c, |_, _, _| rng.uniform()).unwrap()
    }

    #[test]
    fn quadrant_split_rules() {
        let img = noise(1, 5, 5, 1);
        let q = quadrant_partition(&img).unwrap();
        let shapes: Vec<_> = q.iter().map(|b| (b.height(), b.width())).collect();
        assert_eq!(shapes, vec![(3, 3), (3, 2), (2, 3), (2, 2)]);
        // reassembly
        let rects = quadrant_rects(5, 5).unwrap();
        let mut seen = [0; 25];
        for (block, rect) in q.iter().zip(rects) {
            for r in 0..rect.rows {
                for c in 0..rect.cols {
                    assert_eq!(block.get(r, c, 0), img.get(rect.row0 + r, rect.col0 + c, 0));
                    seen[(rect.row0 + r) * 5 + rect.col0 + c] += 1;
                }
            }
        }
        assert!(seen.iter().all(|&n| n == 1));
        let big = quadrant_rects(4096, 4096).unwrap();
        assert!(big.iter().all(|r| r.rows == 2048 && r.cols == 2048));
        assert!(quadrant_rects(1, 8).is_err());
    }

    #[test]
    fn autocorrelation_conventions() {
        let img = noise(2, 12, 12, 1);
        assert!((autocorrelation(&img, 0, Axis::H, 0).unwrap() - 1.0).abs() < 1e-12);
        let flat = Image::filled(12, 12, 1, 0.4).unwrap();
        assert_eq!(autocorrelation(&flat, 0, Axis::V, 3).unwrap(), 0.0);
        assert!(autocorrelation(&img, 0, Axis::H, 12).is_err());
        assert!(autocorrelation(&img, 1, Axis::H, 1).is_err());
    }

    #[test]
    fn loss_errors() {
        let a = noise(3, 16, 16, 1);
        let b = noise(4, 16, 17, 1);
        let spec = LagSpec::new(vec![2, 4], 4).unwrap();
        assert!(matches!(l_ap(&a, &b, &spec), Err(Error::ShapeMismatch(_))));
        let too_far = LagSpec::new(vec![8], 4).unwrap();
        assert!(matches!(l_ap(&a, &a, &too_far), Err(Error::OutOfRange(_))));
        assert!(LagSpec::new(vec![], 4).is_err());
        assert!(LagSpec::new(vec![2, 2], 4).is_err());
        assert!(LagSpec::new(vec![2], 3).is_err());
        assert_eq!(LagSpec::for_period(8).unwrap().lags, vec![2, 4, 6, 8, 10]);
        assert_eq!(LagSpec::for_period(32).unwrap(), LagSpec::default());
    }

    #[test]
    fn flat_prediction_has_zero_gradient() {
        let flat = Image::filled(16, 16, 1, 0.3).unwrap();
        let gt = noise(5, 16, 16, 1);
        let spec = LagSpec::new(vec![2, 4], 4).unwrap();
        let g = l_ap_gradient(&flat, &gt, &spec).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
        assert!(l_ap(&flat, &gt, &spec).unwrap() > 0.0);
    }

    #[test]
    fn identical_inputs_zero_loss_and_gradient() {
        let x = noise(6, 20, 20, 3);
        let spec = LagSpec::new(vec![3, 6], 4).unwrap();
        assert_eq!(l_ap(&x, &x, &spec).unwrap(), 0.0);
        assert!(l_ap_gradient(&x, &x, &spec).unwrap().data().iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn global_block_layout() {
        let x = noise(7, 10, 10, 1);
        let y = noise(8, 10, 10, 1);
        let spec = LagSpec::new(vec![1, 3], 1).unwrap();
        let direct: f64 = [1usize, 3]
            .iter()
            .flat_map(|&lag| Axis::BOTH.map(|axis| (lag, axis)))
            .map(|(lag, axis)| {
                (autocorrelation(&x, 0, axis, lag).unwrap() - autocorrelation(&y, 0, axis, lag).unwrap()).powi(2)
            })
            .sum::<f64>()
            / 4.0;
        assert!((l_ap(&x, &y, &spec).unwrap() - direct).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn autocorrelation_bounded_and_loss_symmetric(seed in any::<u64>(), lag in 1usize..6) {
            let a = noise(seed, 14, 14, 3);
            let b = noise(seed.wrapping_add(1), 14, 14, 3);
            for axis in Axis::BOTH {
                let v = autocorrelation(&a, 1, axis, lag).unwrap();
                prop_assert!(v.abs() <= 1.0 + 1e-9);
            }
            let spec = LagSpec::new(vec![1, lag.min(6)], 4).unwrap_or_else(|_| LagSpec::new(vec![1], 4).unwrap());
            let ab = l_ap(&a, &b, &spec).unwrap();
            let ba = l_ap(&b, &a, &spec).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - ba).abs() <= 1e-15 * ab.max(1.0));
        }
    }
}
