//! Two-axis rotary positional embedding with a configurable base frequency.
//!
//! A [`FeatureVec`] holds `2·d` values: the first `d` belong to the height
//! axis and the last `d` to the width axis. Within each half, pair `i`
//! occupies indices `(2i, 2i+1)` and is rotated by `m · θ^(-2i/d)` where `m`
//! is the token coordinate along that axis.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Grid2D;
use crate::rng::{rng_stream, Seed};

/// Per-axis feature width, base frequency and token-grid extent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RopeConfig {
    /// Feature dimension per axis. Even, at least 2.
    pub d: usize,
    /// Base frequency, strictly greater than 1.
    pub theta: f64,
    pub grid_h: usize,
    pub grid_w: usize,
}

impl RopeConfig {
    pub fn new(d: usize, theta: f64, grid_h: usize, grid_w: usize) -> Result<Self> {
        let cfg = Self {
            d,
            theta,
            grid_h,
            grid_w,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 || !self.d.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "per-axis rope dimension must be even and >= 2, got {}",
                self.d
            )));
        }
        if !(self.theta > 1.0) || !self.theta.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "rope base frequency must be finite and > 1, got {}",
                self.theta
            )));
        }
        if self.grid_h == 0 || self.grid_w == 0 {
            return Err(Error::InvalidArgument("rope grid extents must be >= 1".into()));
        }
        Ok(())
    }

    pub fn pairs(&self) -> usize {
        self.d / 2
    }

    /// Length of a [`FeatureVec`] under this config.
    pub fn feature_len(&self) -> usize {
        2 * self.d
    }
}

/// Query/key vector laid out as height-axis half then width-axis half.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVec(pub Vec<f64>);

impl FeatureVec {
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &FeatureVec) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }
}

/// Adjacent-token rotation angle of each pair: `θ^(-2i/d)`, `i = 0..d/2`.
pub fn phase_deltas(cfg: &RopeConfig) -> Vec<f64> {
    (0..cfg.pairs())
        .map(|i| cfg.theta.powf(-(2.0 * i as f64) / cfg.d as f64))
        .collect()
}

/// Number of pairs whose adjacent-token rotation exceeds `threshold_deg`.
pub fn strong_bandwidth(cfg: &RopeConfig, threshold_deg: f64) -> Result<usize> {
    if !(threshold_deg > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold must be positive, got {threshold_deg}"
        )));
    }
    let limit = threshold_deg.to_radians();
    Ok(phase_deltas(cfg).into_iter().filter(|&p| p > limit).count())
}

/// Rotates a vector in place given precomputed phase deltas.
pub(crate) fn rotate_in_place(v: &mut [f64], pos: (i64, i64), deltas: &[f64]) {
    let d = deltas.len() * 2;
    for (axis, m) in [pos.0, pos.1].into_iter().enumerate() {
        if m == 0 {
            continue;
        }
        let half = &mut v[axis * d..(axis + 1) * d];
        for (i, &delta) in deltas.iter().enumerate() {
            let (s, c) = (m as f64 * delta).sin_cos();
            let (a, b) = (half[2 * i], half[2 * i + 1]);
            half[2 * i] = a * c - b * s;
            half[2 * i + 1] = a * s + b * c;
        }
    }
}

/// Applies the 2D rotary embedding for token coordinates `pos = (m_h, m_w)`.
///
/// Coordinates outside the configured grid, including negative ones, are
/// accepted; rotating by `-pos` inverts rotating by `pos`.
pub fn rotate_features(v: &FeatureVec, pos: (i64, i64), cfg: &RopeConfig) -> Result<FeatureVec> {
    if v.0.len() != cfg.feature_len() {
        return Err(Error::ShapeMismatch(format!(
            "feature vector has {} values, rope config expects {}",
            v.0.len(),
            cfg.feature_len()
        )));
    }
    let mut out = v.0.clone();
    rotate_in_place(&mut out, pos, &phase_deltas(cfg));
    Ok(FeatureVec(out))
}

/// Mean cosine similarity between a random unit query rotated to the grid
/// center and the same query rotated to every grid cell.
///
/// Queries are Gaussian draws normalized onto the unit sphere. Because both
/// rotations are isometries the similarity is `Σ_pairs |u_pair|² cos(Δm·Δφ)`,
/// so the map is evaluated from the sample-averaged pair energies.
pub fn adjacent_similarity_map(cfg: &RopeConfig, num_samples: usize, seed: Seed) -> Result<Grid2D> {
    if cfg.grid_h < 3 || cfg.grid_w < 3 {
        return Err(Error::InvalidArgument(format!(
            "similarity map needs a grid of at least 3x3, got {}x{}",
            cfg.grid_h, cfg.grid_w
        )));
    }
    if num_samples == 0 {
        return Err(Error::InvalidArgument("num_samples must be >= 1".into()));
    }
    let pairs = cfg.pairs();
    let mut rng = rng_stream(seed);
    // energy[axis * pairs + i], averaged over samples
    let mut energy = vec![0.0; 2 * pairs];
    for _ in 0..num_samples {
        let u = random_unit(&mut rng, cfg.feature_len());
        for (slot, pair) in energy.iter_mut().zip(u.0.chunks_exact(2)) {
            *slot += pair[0] * pair[0] + pair[1] * pair[1];
        }
    }
    energy.iter_mut().for_each(|e| *e /= num_samples as f64);

    let deltas = phase_deltas(cfg);
    let (ch, cw) = center(cfg);
    let axis_profile = |extent: usize, c: usize, energies: &[f64]| -> Vec<f64> {
        (0..extent)
            .map(|p| {
                let dm = p as f64 - c as f64;
                energies
                    .iter()
                    .zip(&deltas)
                    .map(|(e, phi)| e * (dm * phi).cos())
                    .sum()
            })
            .collect()
    };
    let rows = axis_profile(cfg.grid_h, ch, &energy[..pairs]);
    let cols = axis_profile(cfg.grid_w, cw, &energy[pairs..]);
    let data: Vec<f64> = (0..cfg.grid_h)
        .into_par_iter()
        .flat_map_iter(|r| {
            let cols = &cols;
            let row = rows[r];
            cols.iter().map(move |c| row + c)
        })
        .collect();
    let mut map = Grid2D::new(cfg.grid_h, cfg.grid_w, data)?;
    map.set(ch, cw, 1.0);
    Ok(map)
}

/// Grid center used by the similarity map: `(grid_h / 2, grid_w / 2)`.
pub fn center(cfg: &RopeConfig) -> (usize, usize) {
    (cfg.grid_h / 2, cfg.grid_w / 2)
}

pub(crate) fn random_unit(rng: &mut crate::rng::RngStream, len: usize) -> FeatureVec {
    loop {
        let v = rng.normals(len);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return FeatureVec(v.into_iter().map(|x| x / n).collect());
        }
    }
}

/// Number of cells with similarity strictly above `level`.
pub fn count_above(map: &Grid2D, level: f64) -> usize {
    map.data().iter().filter(|&&v| v > level).count()
}
