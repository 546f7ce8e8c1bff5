//! Periodic grid-artifact detectors.
//!
//! The spectral detector looks for energy spikes on the frequency lattice of
//! a given pixel period; the spatial detector scores per-quadrant luma
//! autocorrelation at that period.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Grid2D, Image};
use crate::periodicity::{quadrant_rects, Axis, FLAT_VARIANCE};

/// Default spike-to-background ratio above which an image is flagged.
pub const DEFAULT_SPIKE_THRESHOLD: f64 = 10.0;
/// Default spatial aggregate above which an image is flagged.
pub const DEFAULT_SPATIAL_THRESHOLD: f64 = 0.5;
/// Outer radius (Chebyshev, in bins) of the background annulus.
pub const ANNULUS_RADIUS: i64 = 3;
/// Zero-mean luma below this everywhere counts as flat (score 0).
const FLAT_AMPLITUDE: f64 = 1e-12;

struct Fft2 {
    rows: Arc<dyn Fft<f64>>,
    cols: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    fn forward(n_rows: usize, n_cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows: planner.plan_fft_forward(n_cols),
            cols: planner.plan_fft_forward(n_rows),
        }
    }

    /// In-place 2D DFT of a row-major `n_rows × n_cols` buffer.
    fn process(&self, buf: &mut [Complex<f64>], n_rows: usize, n_cols: usize) {
        for row in buf.chunks_exact_mut(n_cols) {
            self.rows.process(row);
        }
        let mut column = vec![Complex::new(0.0, 0.0); n_rows];
        for c in 0..n_cols {
            for r in 0..n_rows {
                column[r] = buf[r * n_cols + c];
            }
            self.cols.process(&mut column);
            for r in 0..n_rows {
                buf[r * n_cols + c] = column[r];
            }
        }
    }
}

fn dft2(plane: &Grid2D) -> Vec<Complex<f64>> {
    let (m, n) = (plane.rows(), plane.cols());
    let mut buf: Vec<Complex<f64>> = plane.data().iter().map(|&v| Complex::new(v, 0.0)).collect();
    Fft2::forward(m, n).process(&mut buf, m, n);
    buf
}

fn zero_mean(plane: &Grid2D) -> Grid2D {
    let mu = plane.mean();
    Grid2D::new(plane.rows(), plane.cols(), plane.data().iter().map(|v| v - mu).collect())
        .expect("finite input stays finite")
}

/// Moves the DC term to `(rows/2, cols/2)`.
fn center_spectrum(rows: usize, cols: usize, values: &[f64]) -> Grid2D {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[((r + rows / 2) % rows) * cols + (c + cols / 2) % cols] = values[r * cols + c];
        }
    }
    Grid2D::new(rows, cols, out).expect("finite spectrum")
}

/// `|DFT|` of the zero-mean luma plane, DC-centered.
pub fn magnitude_spectrum(img: &Image) -> Grid2D {
    let luma = zero_mean(&img.luma());
    let spec = dft2(&luma);
    let mags: Vec<f64> = spec.iter().map(|z| z.norm()).collect();
    center_spectrum(luma.rows(), luma.cols(), &mags)
}

/// `log(1 + |·|)` of a spectrum, the form used for PNG export.
pub fn log_spectrum(spectrum: &Grid2D) -> Grid2D {
    Grid2D::new(
        spectrum.rows(),
        spectrum.cols(),
        spectrum.data().iter().map(|v| v.abs().ln_1p()).collect(),
    )
    .expect("finite log spectrum")
}

/// Separable periodic Hann window `sin²(π·k/N)` applied to the plane.
fn hann_windowed(plane: &Grid2D) -> Grid2D {
    let window = |k: usize, n: usize| (std::f64::consts::PI * k as f64 / n as f64).sin().powi(2);
    Grid2D::from_fn(plane.rows(), plane.cols(), |r, c| {
        plane.get(r, c) * window(r, plane.rows()) * window(c, plane.cols())
    })
    .expect("finite windowed plane")
}

/// Result of the spectral grid-spike detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub period: usize,
    /// Examined `(freq_row, freq_col)` lattice bins (signed frequencies, one
    /// of each conjugate pair).
    pub spike_bins: Vec<(i64, i64)>,
    pub peak_to_background: Vec<f64>,
    pub threshold: f64,
    pub score: f64,
    pub flagged: bool,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Lattice bins `(round(a·M/P), round(b·N/P))` up to Nyquist, half plane.
fn lattice_bins(m: usize, n: usize, period: usize) -> Vec<(i64, i64)> {
    let (step_r, step_c) = (m as f64 / period as f64, n as f64 / period as f64);
    let (nyq_r, nyq_c) = (m as f64 / 2.0, n as f64 / 2.0);
    let max_a = (nyq_r / step_r + 1e-9).floor() as i64;
    let max_b = (nyq_c / step_c + 1e-9).floor() as i64;
    let mut bins = Vec::new();
    for a in 0..=max_a {
        for b in -max_b..=max_b {
            if a == 0 && b <= 0 {
                continue;
            }
            let bin = ((a as f64 * step_r).round() as i64, (b as f64 * step_c).round() as i64);
            if !bins.contains(&bin) {
                bins.push(bin);
            }
        }
    }
    bins
}

/// Flags energy spikes on the frequency lattice of `period`.
///
/// The zero-mean luma plane is Hann-windowed before the DFT, which keeps
/// border leakage off the axes without touching exactly periodic content.
/// A lattice bin counts only if it is the maximum of its own 3×3 core, so
/// the main lobe of a nearby harmonic of another period is not mistaken for
/// a spike. Its magnitude is divided by the median magnitude of the 7×7
/// neighbourhood minus that core (DC excluded); the score is the largest
/// ratio.
pub fn grid_spike_score(img: &Image, period: usize, threshold: f64) -> Result<SpectrumReport> {
    if period < 2 {
        return Err(Error::InvalidArgument(format!("period must be >= 2, got {period}")));
    }
    let (m, n) = (img.height(), img.width());
    if m < 4 * period || n < 4 * period {
        return Err(Error::OutOfRange(format!(
            "period {period} needs an image of at least {0}x{0}, got {m}x{n}",
            4 * period
        )));
    }
    let centered = zero_mean(&img.luma());
    let flat = centered.data().iter().all(|v| v.abs() < FLAT_AMPLITUDE);
    let mags: Vec<f64> = dft2(&hann_windowed(&centered)).iter().map(|z| z.norm()).collect();
    let peak = if flat { 0.0 } else { mags.iter().copied().fold(0.0, f64::max) };
    let floor = (peak * 1e-9).max(f64::MIN_POSITIVE);
    let at = |fr: i64, fc: i64| {
        let r = fr.rem_euclid(m as i64) as usize;
        let c = fc.rem_euclid(n as i64) as usize;
        mags[r * n + c]
    };
    let wraps_to_dc = |fr: i64, fc: i64| fr.rem_euclid(m as i64) == 0 && fc.rem_euclid(n as i64) == 0;

    let bins = lattice_bins(m, n, period);
    let mut ratios = Vec::with_capacity(bins.len());
    let mut ring = Vec::with_capacity(40);
    for &(fr, fc) in &bins {
        let value = at(fr, fc);
        let core_max = (-1..=1)
            .flat_map(|dr| (-1..=1).map(move |dc| (dr, dc)))
            .filter(|&(dr, dc)| !wraps_to_dc(fr + dr, fc + dc))
            .map(|(dr, dc)| at(fr + dr, fc + dc))
            .fold(0.0, f64::max);
        if peak == 0.0 || value < core_max {
            ratios.push(0.0);
            continue;
        }
        ring.clear();
        for dr in -ANNULUS_RADIUS..=ANNULUS_RADIUS {
            for dc in -ANNULUS_RADIUS..=ANNULUS_RADIUS {
                if dr.abs().max(dc.abs()) <= 1 || wraps_to_dc(fr + dr, fc + dc) {
                    continue;
                }
                ring.push(at(fr + dr, fc + dc));
            }
        }
        let background = median(&mut ring).max(floor);
        ratios.push(value / background);
    }
    let score = ratios.iter().copied().fold(0.0, f64::max);
    Ok(SpectrumReport {
        period,
        spike_bins: bins,
        peak_to_background: ratios,
        threshold,
        score,
        flagged: score > threshold,
    })
}

/// Largest flagged candidate with a spiking lattice bin that no smaller
/// flagged candidate already accounts for.
///
/// A pattern of period `P` also fires the detector at divisors of `P` and at
/// candidates whose lattices happen to pass through its harmonics; the
/// latter only spike on bins a smaller candidate also spikes on, while `P`
/// has harmonics on no smaller lattice.
pub fn detect_fundamental_period(img: &Image, candidates: &[usize], threshold: f64) -> Result<Option<usize>> {
    let canonical = |(r, c): (i64, i64)| if r < 0 || (r == 0 && c < 0) { (-r, -c) } else { (r, c) };
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut explained = std::collections::HashSet::new();
    let mut best = None;
    for p in sorted {
        let report = grid_spike_score(img, p, threshold)?;
        if !report.flagged {
            continue;
        }
        let spikes: Vec<(i64, i64)> = report
            .spike_bins
            .iter()
            .zip(&report.peak_to_background)
            .filter(|&(_, &ratio)| ratio > threshold)
            .map(|(&bin, _)| canonical(bin))
            .collect();
        if spikes.iter().any(|bin| !explained.contains(bin)) {
            best = Some(p);
        }
        explained.extend(spikes);
    }
    Ok(best)
}

/// Per-quadrant luma autocorrelation at the artifact period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicityScore {
    pub period: usize,
    /// Top-left, top-right, bottom-left, bottom-right.
    pub per_quadrant: [f64; 4],
    /// Median of `per_quadrant`.
    pub aggregate: f64,
    pub threshold: f64,
    pub flagged: bool,
}

fn plane_autocorr(plane: &Grid2D, axis: Axis, lag: usize) -> f64 {
    let (rows, cols) = (plane.rows(), plane.cols());
    let n = (rows * cols) as f64;
    let mu = plane.mean();
    let var = plane.data().iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
    if var < FLAT_VARIANCE {
        return 0.0;
    }
    let (pr, pc, dr, dc) = match axis {
        Axis::H => (rows, cols - lag, 0, lag),
        Axis::V => (rows - lag, cols, lag, 0),
    };
    let mut s = 0.0;
    for r in 0..pr {
        for c in 0..pc {
            s += (plane.get(r, c) - mu) * (plane.get(r + dr, c + dc) - mu);
        }
    }
    s / ((pr * pc) as f64 * var)
}

/// Spatial periodicity score: per quadrant, the mean over both axes of the
/// luma autocorrelation at lag `period`; the aggregate is their median.
pub fn periodicity_score_spatial(img: &Image, period: usize, threshold: f64) -> Result<PeriodicityScore> {
    let luma = img.luma();
    let rects = quadrant_rects(luma.rows(), luma.cols())?;
    let min_extent = rects.iter().map(|r| r.rows.min(r.cols)).min().unwrap_or(0);
    if period == 0 || period >= min_extent {
        return Err(Error::OutOfRange(format!(
            "period {period} must be in 1..{min_extent} for a {}x{} image",
            luma.rows(),
            luma.cols()
        )));
    }
    let mut per_quadrant = [0.0; 4];
    for (slot, rect) in per_quadrant.iter_mut().zip(rects.iter()) {
        let block = Grid2D::from_fn(rect.rows, rect.cols, |r, c| luma.get(rect.row0 + r, rect.col0 + c))?;
        *slot = 0.5 * (plane_autocorr(&block, Axis::H, period) + plane_autocorr(&block, Axis::V, period));
    }
    let aggregate = median(&mut per_quadrant.clone());
    Ok(PeriodicityScore {
        period,
        per_quadrant,
        aggregate,
        threshold,
        flagged: aggregate > threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{rng_stream, Seed};

    #[test]
    fn constant_image_spectrum_is_zero() {
        let img = Image::filled(16, 24, 3, 0.6).unwrap();
        assert!(magnitude_spectrum(&img).data().iter().all(|&v| v < 1e-9));
        let score = periodicity_score_spatial(&img, 4, 0.5).unwrap();
        assert_eq!(score.per_quadrant, [0.0; 4]);
        let report = grid_spike_score(&Image::filled(64, 64, 1, 0.3).unwrap(), 8, 10.0).unwrap();
        assert_eq!(report.score, 0.0);
        assert!(!report.flagged);
    }

    #[test]
    fn bin_aligned_cosine_spectrum() {
        let w = 256;
        let img = Image::from_fn(8, w, 1, |_, c, _| {
            0.5 + 0.25 * (std::f64::consts::TAU * c as f64 / 32.0).cos()
        })
        .unwrap();
        let spec = magnitude_spectrum(&img);
        let (cr, cc) = (4, w / 2);
        for r in 0..8 {
            for c in 0..w {
                let v = spec.get(r, c);
                if r == cr && (c == cc + 8 || c == cc - 8) {
                    // 0.25 · N / 2 with N = 8·256
                    assert!((v - 0.25 * 2048.0 / 2.0).abs() < 1e-9);
                } else {
                    assert!(v < 1e-9, "leak at ({r},{c}) = {v}");
                }
            }
        }
    }

    #[test]
    fn parseval_and_offset_invariance() {
        let mut rng = rng_stream(Seed(4));
        let img = Image::from_fn(12, 20, 3, |_, _, _| rng.uniform()).unwrap();
        let spec = magnitude_spectrum(&img);
        let luma = img.luma();
        let mu = luma.mean();
        let energy: f64 = luma.data().iter().map(|v| (v - mu).powi(2)).sum();
        let spectral: f64 = spec.data().iter().map(|v| v * v).sum::<f64>() / 240.0;
        assert!((energy - spectral).abs() <= 1e-9 * energy);
        let shifted = img.map(|v| v + 0.25).unwrap();
        let spec2 = magnitude_spectrum(&shifted);
        for (a, b) in spec.data().iter().zip(spec2.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn detector_preconditions() {
        let img = Image::filled(64, 64, 1, 0.5).unwrap();
        assert!(grid_spike_score(&img, 1, 10.0).is_err());
        assert!(grid_spike_score(&img, 17, 10.0).is_err());
        assert!(periodicity_score_spatial(&img, 32, 0.5).is_err());
    }

    #[test]
    fn lattice_covers_half_plane() {
        let bins = lattice_bins(64, 64, 8);
        // a in 0..=4, b in -4..=4, minus (0, b <= 0)
        assert_eq!(bins.len(), 5 * 9 - 5);
        assert!(bins.contains(&(0, 8)) && bins.contains(&(32, -32)));
        assert!(!bins.contains(&(0, 0)));
    }

    #[test]
    fn exact_tile_fires_only_at_its_period() {
        let mut rng = rng_stream(Seed(3));
        let token: Vec<f64> = (0..3 * 32 * 32).map(|_| rng.uniform()).collect();
        let tile = crate::latent::periodic_tile_demo(&token, 8, 8, crate::latent::PackFactor::new(32).unwrap()).unwrap();
        assert!(grid_spike_score(&tile, 32, 10.0).unwrap().flagged);
        // bin 73 of the period-7 lattice neighbours the tile's harmonic at 72
        for p in [3, 5, 7] {
            assert!(grid_spike_score(&tile, p, 10.0).unwrap().score < 1e-6, "period {p}");
        }
    }

    #[test]
    fn fundamental_period_of_injected_grid_and_toy_tokens() {
        let img = crate::synth::inject_grid(&crate::synth::clean_scene(Seed(1), 256).unwrap(), Seed(2), 32, 0.1).unwrap();
        assert_eq!(detect_fundamental_period(&img, &[8, 16, 24, 32, 48, 64], 10.0).unwrap(), Some(32));
        let clean = crate::synth::clean_scene(Seed(1), 256).unwrap();
        assert_eq!(detect_fundamental_period(&clean, &[8, 16, 32], 10.0).unwrap(), None);

        // identical packed tokens through unpack (2) and the surrogate decoder (4)
        let mut rng = rng_stream(Seed(4));
        let token: Vec<f64> = (0..192).map(|_| rng.uniform()).collect();
        let two = crate::latent::PackFactor::new(2).unwrap();
        let four = crate::latent::PackFactor::new(4).unwrap();
        let latent = crate::latent::unpack(&crate::latent::TokenGrid::repeat(&token, 8, 8).unwrap(), two).unwrap();
        let img = crate::latent::decode_surrogate(&latent, four).unwrap();
        assert_eq!(detect_fundamental_period(&img, &[4, 8, 16], 10.0).unwrap(), Some(8));
    }

    #[test]
    fn ramp_is_not_a_grid() {
        let ramp = Image::from_fn(128, 128, 1, |r, c, _| 0.2 + 0.003 * r as f64 + 0.002 * c as f64).unwrap();
        for p in [4, 8, 16, 32] {
            assert!(!grid_spike_score(&ramp, p, 10.0).unwrap().flagged, "period {p}");
        }
    }
}
