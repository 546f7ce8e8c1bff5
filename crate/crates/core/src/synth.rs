//! Seeded synthetic images: clean textures, gradients and injected grid
//! patterns. Used by the training corpus, the detector calibration and the
//! examples.

use crate::error::Result;
use crate::image::{Grid2D, Image};
use crate::latent::{periodic_tile_demo, PackFactor};
use crate::rng::{rng_stream, RngStream, Seed};

/// Circular separable Gaussian blur of a plane.
pub fn gaussian_blur_wrap(plane: &Grid2D, sigma: f64) -> Grid2D {
    if sigma <= 0.0 {
        return plane.clone();
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / total).collect();
    let (m, n) = (plane.rows() as i64, plane.cols() as i64);
    let pass = |src: &Grid2D, along_cols: bool| {
        Grid2D::from_fn(src.rows(), src.cols(), |r, c| {
            kernel
                .iter()
                .enumerate()
                .map(|(i, w)| {
                    let off = i as i64 - radius;
                    let (rr, cc) = if along_cols {
                        (r as i64, (c as i64 + off).rem_euclid(n))
                    } else {
                        ((r as i64 + off).rem_euclid(m), c as i64)
                    };
                    w * src.get(rr as usize, cc as usize)
                })
                .sum()
        })
        .expect("blur is finite")
    };
    pass(&pass(plane, true), false)
}

fn noise_plane(rng: &mut RngStream, rows: usize, cols: usize) -> Grid2D {
    Grid2D::new(rows, cols, rng.normals(rows * cols)).expect("finite normals")
}

/// Rescales a plane to zero mean and unit standard deviation.
fn standardize(plane: &Grid2D) -> Grid2D {
    let mu = plane.mean();
    let sd = (plane.data().iter().map(|v| (v - mu).powi(2)).sum::<f64>() / plane.data().len() as f64).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    Grid2D::new(plane.rows(), plane.cols(), plane.data().iter().map(|v| (v - mu) / sd).collect())
        .expect("finite")
}

/// Gaussian-smoothed noise around 0.5 with standard deviation `amplitude`.
pub fn smoothed_noise(seed: Seed, size: usize, channels: usize, sigma: f64, amplitude: f64) -> Result<Image> {
    let mut rng = rng_stream(seed);
    let planes: Vec<Grid2D> = (0..channels)
        .map(|_| standardize(&gaussian_blur_wrap(&noise_plane(&mut rng, size, size), sigma)))
        .collect();
    Image::from_fn(size, size, channels, |r, c, k| {
        (0.5 + amplitude * planes[k].get(r, c)).clamp(0.0, 1.0)
    })
}

/// Linear ramp from `lo` at the top-left corner to `hi` at the bottom-right.
pub fn diagonal_gradient(size: usize, channels: usize, lo: f64, hi: f64) -> Result<Image> {
    let span = (2 * (size - 1)).max(1) as f64;
    Image::from_fn(size, size, channels, |r, c, _| lo + (hi - lo) * (r + c) as f64 / span)
}

/// A clean image of the detector calibration corpus: a random-direction
/// gradient plus low-amplitude smoothed noise, kept inside `[0.15, 0.85]`.
pub fn clean_scene(seed: Seed, size: usize) -> Result<Image> {
    let mut rng = rng_stream(seed);
    let angle = rng.uniform_range(0.0, std::f64::consts::TAU);
    let (dy, dx) = angle.sin_cos();
    let strength = rng.uniform_range(0.1, 0.3);
    let sigma = rng.uniform_range(1.5, 4.0);
    let noise = standardize(&gaussian_blur_wrap(&noise_plane(&mut rng, size, size), sigma));
    let tint: Vec<f64> = (0..3).map(|_| rng.uniform_range(-0.05, 0.05)).collect();
    let half = (size as f64 - 1.0) / 2.0;
    Image::from_fn(size, size, 3, |r, c, k| {
        let t = ((r as f64 - half) * dy + (c as f64 - half) * dx) / size as f64;
        (0.5 + tint[k] + strength * t + 0.06 * noise.get(r, c)).clamp(0.15, 0.85)
    })
}

/// Zero-mean grid pattern of exact spatial period `period`, built by decoding
/// a grid of one random token; the largest absolute value equals `amplitude`.
pub fn grid_pattern(seed: Seed, size: usize, period: usize, amplitude: f64) -> Result<Image> {
    let mut rng = rng_stream(seed);
    let token: Vec<f64> = (0..period * period).map(|_| rng.uniform()).collect();
    let reps = size.div_ceil(period);
    let tiled = periodic_tile_demo(&token, reps, reps, PackFactor::new(period)?)?;
    let tiled = tiled.crop(0, 0, size, size)?;
    let mean = token.iter().sum::<f64>() / token.len() as f64;
    let peak = token.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max).max(1e-12);
    tiled.map(|v| (v - mean) * amplitude / peak)
}

/// Adds a grid pattern to every channel of `img`, clamping into `[0, 1]`.
pub fn inject_grid(img: &Image, seed: Seed, period: usize, amplitude: f64) -> Result<Image> {
    let pattern = grid_pattern(seed, img.height().max(img.width()), period, amplitude)?;
    Image::from_fn(img.height(), img.width(), img.channels(), |r, c, k| {
        (img.get(r, c, k) + pattern.get(r, c, 0)).clamp(0.0, 1.0)
    })
}

/// Vertical square grating: columns alternate between 0 and 1 every
/// `half_period` pixels.
pub fn square_grating(rows: usize, cols: usize, half_period: usize) -> Result<Image> {
    Image::from_fn(rows, cols, 1, |_, c, _| ((c / half_period) % 2) as f64)
}

/// One texture of the training corpus: a soft colour gradient, smoothed
/// colour noise at a coarse and a fine scale, and a few soft-edged discs.
/// The content is aperiodic, so any grid energy in a model output is the
/// model's own.
pub fn texture(seed: Seed, size: usize) -> Result<Image> {
    let mut rng = rng_stream(seed);
    let angle = rng.uniform_range(0.0, std::f64::consts::TAU);
    let (gy, gx) = angle.sin_cos();
    let grad_strength = rng.uniform_range(0.0, 0.3);
    let noise_at = |sigma: f64, rng: &mut RngStream| -> Vec<Grid2D> {
        (0..3)
            .map(|_| standardize(&gaussian_blur_wrap(&noise_plane(rng, size, size), sigma)))
            .collect()
    };
    let coarse_sigma = rng.uniform_range(3.0, 6.0);
    let coarse = noise_at(coarse_sigma, &mut rng);
    let fine_sigma = rng.uniform_range(0.7, 1.5);
    let fine = noise_at(fine_sigma, &mut rng);
    let coarse_amp = rng.uniform_range(0.04, 0.12);
    let fine_amp = rng.uniform_range(0.01, 0.05);
    let base: Vec<f64> = (0..3).map(|_| rng.uniform_range(0.3, 0.7)).collect();
    let discs: Vec<(f64, f64, f64, f64, [f64; 3])> = (0..rng.index(4) + 1)
        .map(|_| {
            let cy = rng.uniform_range(0.0, size as f64);
            let cx = rng.uniform_range(0.0, size as f64);
            let radius = rng.uniform_range(0.08, 0.3) * size as f64;
            let softness = rng.uniform_range(0.5, 2.0);
            let tint = [0, 1, 2].map(|_| rng.uniform_range(-0.25, 0.25));
            (cy, cx, radius, softness, tint)
        })
        .collect();
    let half = (size as f64 - 1.0) / 2.0;
    Image::from_fn(size, size, 3, |r, c, k| {
        let (y, x) = (r as f64 - half, c as f64 - half);
        let ramp = grad_strength * (y * gy + x * gx) / size as f64;
        let shapes: f64 = discs
            .iter()
            .map(|&(cy, cx, radius, soft, tint)| {
                let d = ((r as f64 - cy).powi(2) + (c as f64 - cx).powi(2)).sqrt();
                tint[k] / (1.0 + ((d - radius) / soft).exp())
            })
            .sum();
        let v = base[k] + ramp + shapes + coarse_amp * coarse[k].get(r, c) + fine_amp * fine[k].get(r, c);
        v.clamp(0.0, 1.0)
    })
}

/// `count` textures from consecutive child seeds of `seed`.
pub fn texture_corpus(seed: Seed, count: usize, size: usize) -> Result<Vec<Image>> {
    (0..count).map(|i| texture(seed.derive(i as u64), size)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blur_preserves_mean() {
        let mut rng = rng_stream(Seed(1));
        let p = noise_plane(&mut rng, 16, 16);
        let b = gaussian_blur_wrap(&p, 2.0);
        assert!((p.mean() - b.mean()).abs() < 1e-12);
    }

    #[test]
    fn grid_pattern_is_periodic_and_scaled() {
        let g = grid_pattern(Seed(3), 64, 16, 0.1).unwrap();
        let peak = g.data().iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!((peak - 0.1).abs() < 1e-12);
        for r in 0..48 {
            for c in 0..48 {
                assert_eq!(g.get(r, c, 0), g.get(r + 16, c + 16, 0));
            }
        }
    }

    #[test]
    fn corpus_is_deterministic_and_in_range() {
        let a = texture_corpus(Seed(9), 3, 32).unwrap();
        let b = texture_corpus(Seed(9), 3, 32).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
        assert!(a.iter().flat_map(|i| i.data()).all(|v| (0.0..=1.0).contains(v)));
    }
}
