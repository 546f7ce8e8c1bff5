//! First-stage corpus filtering: sharpness, edge density, co-occurrence
//! texture statistics, entropy and top-fraction ranking.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Grid2D, Image};

fn require_3x3(plane: &Grid2D) -> Result<()> {
    if plane.rows() < 3 || plane.cols() < 3 {
        return Err(Error::InvalidArgument(format!(
            "needs at least 3x3 pixels, got {}x{}",
            plane.rows(),
            plane.cols()
        )));
    }
    Ok(())
}

/// Population variance of the 4-neighbour Laplacian over interior pixels.
pub fn laplacian_variance_plane(plane: &Grid2D) -> Result<f64> {
    require_3x3(plane)?;
    let mut responses = Vec::with_capacity((plane.rows() - 2) * (plane.cols() - 2));
    for r in 1..plane.rows() - 1 {
        for c in 1..plane.cols() - 1 {
            responses.push(
                plane.get(r - 1, c) + plane.get(r + 1, c) + plane.get(r, c - 1) + plane.get(r, c + 1)
                    - 4.0 * plane.get(r, c),
            );
        }
    }
    let n = responses.len() as f64;
    let mu = responses.iter().sum::<f64>() / n;
    Ok(responses.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n)
}

pub fn laplacian_variance(img: &Image) -> Result<f64> {
    laplacian_variance_plane(&img.luma())
}

/// Mean Sobel gradient magnitude over interior pixels.
pub fn sobel_mean_gradient_plane(plane: &Grid2D) -> Result<f64> {
    require_3x3(plane)?;
    let p = |r: usize, c: usize| plane.get(r, c);
    let mut total = 0.0;
    for r in 1..plane.rows() - 1 {
        for c in 1..plane.cols() - 1 {
            let gx = (p(r - 1, c + 1) + 2.0 * p(r, c + 1) + p(r + 1, c + 1))
                - (p(r - 1, c - 1) + 2.0 * p(r, c - 1) + p(r + 1, c - 1));
            let gy = (p(r + 1, c - 1) + 2.0 * p(r + 1, c) + p(r + 1, c + 1))
                - (p(r - 1, c - 1) + 2.0 * p(r - 1, c) + p(r - 1, c + 1));
            total += (gx * gx + gy * gy).sqrt();
        }
    }
    Ok(total / ((plane.rows() - 2) * (plane.cols() - 2)) as f64)
}

pub fn sobel_mean_gradient(img: &Image) -> Result<f64> {
    sobel_mean_gradient_plane(&img.luma())
}

/// Uniform quantization of `[0, 1]` into `levels` bins; values outside are
/// clamped into the end bins.
#[inline]
fn quantize(v: f64, levels: usize) -> usize {
    ((v * levels as f64).floor().max(0.0) as usize).min(levels - 1)
}

/// Contrast and correlation of the symmetric normalized co-occurrence matrix
/// of the luma plane at `offset = (dr, dc)`.
pub fn glcm_features(img: &Image, offset: (i64, i64), levels: usize) -> Result<(f64, f64)> {
    glcm_features_plane(&img.luma(), offset, levels)
}

pub fn glcm_features_plane(plane: &Grid2D, offset: (i64, i64), levels: usize) -> Result<(f64, f64)> {
    if levels < 2 {
        return Err(Error::InvalidArgument(format!("GLCM needs >= 2 levels, got {levels}")));
    }
    let (dr, dc) = offset;
    if (dr, dc) == (0, 0) || dr.unsigned_abs() as usize >= plane.rows() || dc.unsigned_abs() as usize >= plane.cols() {
        return Err(Error::InvalidArgument(format!(
            "GLCM offset {offset:?} must be nonzero and smaller than {}x{}",
            plane.rows(),
            plane.cols()
        )));
    }
    let mut counts = vec![0.0; levels * levels];
    let (rows, cols) = (plane.rows() as i64, plane.cols() as i64);
    for r in 0..rows {
        for c in 0..cols {
            let (r2, c2) = (r + dr, c + dc);
            if !(0..rows).contains(&r2) || !(0..cols).contains(&c2) {
                continue;
            }
            let i = quantize(plane.get(r as usize, c as usize), levels);
            let j = quantize(plane.get(r2 as usize, c2 as usize), levels);
            counts[i * levels + j] += 1.0;
            counts[j * levels + i] += 1.0;
        }
    }
    let total: f64 = counts.iter().sum();
    let p: Vec<f64> = counts.iter().map(|v| v / total).collect();
    let (mut contrast, mut mu) = (0.0, 0.0);
    for i in 0..levels {
        for j in 0..levels {
            let pij = p[i * levels + j];
            contrast += pij * ((i as f64) - (j as f64)).powi(2);
            mu += pij * i as f64;
        }
    }
    // symmetric matrix: row and column marginals coincide
    let mut var = 0.0;
    let mut cov = 0.0;
    for i in 0..levels {
        for j in 0..levels {
            let pij = p[i * levels + j];
            var += pij * (i as f64 - mu).powi(2);
            cov += pij * (i as f64 - mu) * (j as f64 - mu);
        }
    }
    let correlation = if var > 1e-15 { (cov / var).clamp(-1.0, 1.0) } else { 0.0 };
    Ok((contrast, correlation))
}

/// Shannon entropy in bits of the luma histogram over `bins` uniform bins.
pub fn shannon_entropy(img: &Image, bins: usize) -> Result<f64> {
    shannon_entropy_plane(&img.luma(), bins)
}

pub fn shannon_entropy_plane(plane: &Grid2D, bins: usize) -> Result<f64> {
    if bins < 2 {
        return Err(Error::InvalidArgument(format!("entropy needs >= 2 bins, got {bins}")));
    }
    let mut hist = vec![0usize; bins];
    for &v in plane.data() {
        hist[quantize(v, bins)] += 1;
    }
    let n = plane.data().len() as f64;
    Ok(hist
        .iter()
        .filter(|&&k| k > 0)
        .map(|&k| {
            let p = k as f64 / n;
            -p * p.log2()
        })
        .sum())
}

/// Scoring parameters of the curation stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurationConfig {
    pub keep_fraction: f64,
    pub glcm_levels: usize,
    pub glcm_offsets: Vec<(i64, i64)>,
    pub entropy_bins: usize,
    /// Images whose Laplacian variance falls below this are rejected as blurred.
    pub min_laplacian_var: f64,
    /// Images whose mean Sobel magnitude falls below this are rejected as flat.
    pub min_sobel_mean: f64,
}

impl Default for CurationConfig {
    fn default() -> Self {
        Self {
            keep_fraction: 0.5,
            glcm_levels: 16,
            glcm_offsets: vec![(0, 1), (1, 0)],
            entropy_bins: 256,
            min_laplacian_var: 0.0,
            min_sobel_mean: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationScores {
    pub path: PathBuf,
    pub laplacian_var: f64,
    pub sobel_mean: f64,
    pub glcm_contrast: f64,
    pub glcm_correlation: f64,
    pub entropy_bits: f64,
    /// Filled in by [`rank_and_filter`].
    pub aggregate: f64,
}

pub fn score_image(path: impl AsRef<Path>, img: &Image, cfg: &CurationConfig) -> Result<CurationScores> {
    let luma = img.luma();
    let mut contrast = 0.0;
    let mut correlation = 0.0;
    if cfg.glcm_offsets.is_empty() {
        return Err(Error::InvalidArgument("at least one GLCM offset is required".into()));
    }
    for &offset in &cfg.glcm_offsets {
        let (c, r) = glcm_features_plane(&luma, offset, cfg.glcm_levels)?;
        contrast += c;
        correlation += r;
    }
    let k = cfg.glcm_offsets.len() as f64;
    Ok(CurationScores {
        path: path.as_ref().to_path_buf(),
        laplacian_var: laplacian_variance_plane(&luma)?,
        sobel_mean: sobel_mean_gradient_plane(&luma)?,
        glcm_contrast: contrast / k,
        glcm_correlation: correlation / k,
        entropy_bits: shannon_entropy_plane(&luma, cfg.entropy_bins)?,
        aggregate: 0.0,
    })
}

/// Rank percentile of every value in `[0, 1]`; ties share their mean rank.
fn rank_percentiles(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n == 1 {
        return vec![1.0];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0;
        for &k in &order[i..=j] {
            out[k] = rank / (n - 1) as f64;
        }
        i = j + 1;
    }
    out
}

/// Splits scored images into the `ceil(keep_fraction · N)` with the highest
/// aggregate and the rest. The aggregate is the mean rank percentile of
/// GLCM contrast, |GLCM correlation| and entropy; ties go to the
/// lexicographically smaller path.
pub fn rank_and_filter(
    mut scores: Vec<CurationScores>,
    keep_fraction: f64,
) -> Result<(Vec<CurationScores>, Vec<CurationScores>)> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument("nothing to rank".into()));
    }
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "keep fraction must be in (0, 1], got {keep_fraction}"
        )));
    }
    let contrast = rank_percentiles(&scores.iter().map(|s| s.glcm_contrast).collect::<Vec<_>>());
    let corr = rank_percentiles(&scores.iter().map(|s| s.glcm_correlation.abs()).collect::<Vec<_>>());
    let entropy = rank_percentiles(&scores.iter().map(|s| s.entropy_bits).collect::<Vec<_>>());
    for (i, s) in scores.iter_mut().enumerate() {
        s.aggregate = (contrast[i] + corr[i] + entropy[i]) / 3.0;
    }
    scores.sort_by(|a, b| b.aggregate.total_cmp(&a.aggregate).then_with(|| a.path.cmp(&b.path)));
    let keep = ((keep_fraction * scores.len() as f64).ceil() as usize).min(scores.len());
    let rejected = scores.split_off(keep);
    Ok((scores, rejected))
}

/// Pre-computed scores from later, model-based curation stages, keyed by
/// file name. Images scoring below `min_score` (or missing) are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalScores {
    pub min_score: f64,
    pub scores: BTreeMap<String, f64>,
}

impl ExternalScores {
    pub fn passes(&self, path: &Path) -> bool {
        let key = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        self.scores.get(&key).is_some_and(|&s| s >= self.min_score)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Blurred,
    Flat,
    External,
    Ranked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub path: PathBuf,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationOutcome {
    pub scores: Vec<CurationScores>,
    pub kept: Vec<PathBuf>,
    pub rejected: Vec<Rejection>,
}

/// Full first-stage pass: absolute blur/flat cuts, the optional external
/// gate, then top-fraction ranking of the survivors. Outputs are sorted by
/// path.
pub fn curate(
    mut scores: Vec<CurationScores>,
    cfg: &CurationConfig,
    external: Option<&ExternalScores>,
) -> Result<CurationOutcome> {
    scores.sort_by(|a, b| a.path.cmp(&b.path));
    let mut rejected = Vec::new();
    let mut survivors = Vec::new();
    for s in &scores {
        let reason = if s.laplacian_var < cfg.min_laplacian_var {
            Some(RejectReason::Blurred)
        } else if s.sobel_mean < cfg.min_sobel_mean {
            Some(RejectReason::Flat)
        } else if external.is_some_and(|e| !e.passes(&s.path)) {
            Some(RejectReason::External)
        } else {
            None
        };
        match reason {
            Some(reason) => rejected.push(Rejection { path: s.path.clone(), reason }),
            None => survivors.push(s.clone()),
        }
    }
    let mut kept = Vec::new();
    let mut ranked_scores = Vec::new();
    if !survivors.is_empty() {
        let (k, r) = rank_and_filter(survivors, cfg.keep_fraction)?;
        kept = k.iter().map(|s| s.path.clone()).collect();
        rejected.extend(r.iter().map(|s| Rejection { path: s.path.clone(), reason: RejectReason::Ranked }));
        ranked_scores.extend(k);
        ranked_scores.extend(r);
    }
    // carry aggregates back onto the full score list
    for s in scores.iter_mut() {
        if let Some(r) = ranked_scores.iter().find(|r| r.path == s.path) {
            s.aggregate = r.aggregate;
        }
    }
    kept.sort();
    rejected.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(CurationOutcome { scores, kept, rejected })
}
