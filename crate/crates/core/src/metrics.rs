//! Full-reference fidelity metrics on the luma channel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Grid2D, Image};

/// PSNR reported when the two inputs are identical.
pub const PSNR_CAP_DB: f64 = 100.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

fn same_shape(a: &Image, b: &Image) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn plane_psnr(a: &Grid2D, b: &Grid2D) -> f64 {
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.data().len() as f64;
    if mse == 0.0 {
        PSNR_CAP_DB
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
    }
}

/// `10·log10(1 / MSE)` between luma planes with unit peak; 100 dB when equal.
pub fn psnr_y(a: &Image, b: &Image) -> Result<f64> {
    same_shape(a, b)?;
    Ok(plane_psnr(&a.luma(), &b.luma()))
}

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as i64;
    let g: Vec<f64> = (-r..=r)
        .map(|k| (-(k * k) as f64 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Valid-mode separable filtering with the normalized 1D kernel `k`.
fn filter_valid(p: &Grid2D, k: &[f64]) -> Grid2D {
    let w = k.len();
    let rows = Grid2D::from_fn(p.rows(), p.cols() + 1 - w, |r, c| {
        k.iter().enumerate().map(|(i, kv)| kv * p.get(r, c + i)).sum()
    })
    .expect("finite");
    Grid2D::from_fn(p.rows() + 1 - w, rows.cols(), |r, c| {
        k.iter().enumerate().map(|(i, kv)| kv * rows.get(r + i, c)).sum()
    })
    .expect("finite")
}

fn plane_ssim(x: &Grid2D, y: &Grid2D) -> f64 {
    let k = gaussian_window();
    let product = |a: &Grid2D, b: &Grid2D| {
        Grid2D::new(a.rows(), a.cols(), a.data().iter().zip(b.data()).map(|(u, v)| u * v).collect())
            .expect("finite")
    };
    let mx = filter_valid(x, &k);
    let my = filter_valid(y, &k);
    let exx = filter_valid(&product(x, x), &k);
    let eyy = filter_valid(&product(y, y), &k);
    let exy = filter_valid(&product(x, y), &k);
    let n = mx.data().len() as f64;
    let mut total = 0.0;
    for i in 0..mx.data().len() {
        let (ux, uy) = (mx.data()[i], my.data()[i]);
        let sxx = exx.data()[i] - ux * ux;
        let syy = eyy.data()[i] - uy * uy;
        let sxy = exy.data()[i] - ux * uy;
        let num = (2.0 * ux * uy + SSIM_C1) * (2.0 * sxy + SSIM_C2);
        let den = (ux * ux + uy * uy + SSIM_C1) * (sxx + syy + SSIM_C2);
        total += num / den;
    }
    total / n
}

/// Mean local SSIM of the luma planes: 11×11 Gaussian window (σ = 1.5),
/// valid positions only, `C1 = 0.01²`, `C2 = 0.03²`.
pub fn ssim_y(a: &Image, b: &Image) -> Result<f64> {
    same_shape(a, b)?;
    if a.height() < SSIM_WINDOW || a.width() < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {}x{}",
            a.height(),
            a.width()
        )));
    }
    Ok(plane_ssim(&a.luma(), &b.luma()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchMetric {
    pub row: usize,
    pub col: usize,
    pub psnr_db: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Arithmetic mean of per-patch PSNR (each capped at 100 dB).
    pub psnr_db: f64,
    pub ssim: f64,
    pub patch_size: usize,
    pub per_patch: Vec<PatchMetric>,
}

/// Non-overlapping `patch×patch` tiling from the top-left corner; partial
/// strips on the right and bottom are dropped. Metrics are averaged over
/// patches.
pub fn patch_eval(a: &Image, b: &Image, patch: usize) -> Result<MetricReport> {
    same_shape(a, b)?;
    if patch == 0 || patch > a.height() || patch > a.width() {
        return Err(Error::InvalidArgument(format!(
            "patch {patch} must be in 1..={}",
            a.height().min(a.width())
        )));
    }
    if patch < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "patch {patch} is smaller than the {SSIM_WINDOW}-pixel SSIM window"
        )));
    }
    let (ya, yb) = (a.luma(), b.luma());
    let cut = |p: &Grid2D, r0: usize, c0: usize| {
        Grid2D::from_fn(patch, patch, |r, c| p.get(r0 + r, c0 + c)).expect("finite")
    };
    let mut per_patch = Vec::new();
    for row in (0..=a.height() - patch).step_by(patch) {
        for col in (0..=a.width() - patch).step_by(patch) {
            let (pa, pb) = (cut(&ya, row, col), cut(&yb, row, col));
            per_patch.push(PatchMetric {
                row,
                col,
                psnr_db: plane_psnr(&pa, &pb),
                ssim: plane_ssim(&pa, &pb),
            });
        }
    }
    let n = per_patch.len() as f64;
    Ok(MetricReport {
        psnr_db: per_patch.iter().map(|p| p.psnr_db).sum::<f64>() / n,
        ssim: per_patch.iter().map(|p| p.ssim).sum::<f64>() / n,
        patch_size: patch,
        per_patch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{rng_stream, Seed};

    fn noise(seed: u64, n: usize) -> Image {
        let mut rng = rng_stream(Seed(seed));
        Image::from_fn(n, n, 3, |_, _, _| rng.uniform()).unwrap()
    }

    #[test]
    fn psnr_reference_points() {
        let a = noise(1, 16);
        assert_eq!(psnr_y(&a, &a).unwrap(), PSNR_CAP_DB);
        let black = Image::filled(8, 8, 3, 0.0).unwrap();
        let white = Image::filled(8, 8, 3, 1.0).unwrap();
        assert!(psnr_y(&black, &white).unwrap().abs() < 1e-12);
        let g1 = Image::filled(8, 8, 1, 0.5).unwrap();
        let g2 = Image::filled(8, 8, 1, 0.6).unwrap();
        // MSE = 0.01 (up to the binary representation of 0.1)
        assert!((psnr_y(&g1, &g2).unwrap() - 20.0).abs() < 1e-9);
        assert!(psnr_y(&g1, &noise(2, 8)).is_err());
    }

    #[test]
    fn ssim_reference_points() {
        let a = noise(3, 24);
        assert_eq!(ssim_y(&a, &a).unwrap(), 1.0);
        let zero = Image::filled(16, 16, 1, 0.0).unwrap();
        let one = Image::filled(16, 16, 1, 1.0).unwrap();
        let s = ssim_y(&zero, &one).unwrap();
        assert!((s - SSIM_C1 / (1.0 + SSIM_C1)).abs() < 1e-15);
        assert!(s < 0.01);
        assert!(ssim_y(&Image::filled(10, 20, 1, 0.0).unwrap(), &Image::filled(10, 20, 1, 0.0).unwrap()).is_err());
    }

    #[test]
    fn independent_noise_has_near_zero_ssim() {
        let s = ssim_y(&noise(10, 64), &noise(11, 64)).unwrap();
        assert!(s.abs() < 0.05, "ssim {s}");
    }

    #[test]
    fn patch_protocol() {
        let a = noise(4, 40);
        let b = noise(5, 40);
        let whole = patch_eval(&a, &b, 40).unwrap();
        assert_eq!(whole.per_patch.len(), 1);
        assert_eq!(whole.psnr_db, psnr_y(&a, &b).unwrap());
        assert_eq!(whole.ssim, ssim_y(&a, &b).unwrap());
        let tiles = patch_eval(&a, &b, 16).unwrap();
        assert_eq!(tiles.per_patch.len(), 4); // 8-pixel remainder dropped
        let same = patch_eval(&a, &a, 13).unwrap();
        assert!(same.per_patch.iter().all(|p| p.ssim == 1.0 && p.psnr_db == PSNR_CAP_DB));
        assert!(patch_eval(&a, &b, 41).is_err());
        assert!(patch_eval(&a, &b, 8).is_err());
    }

    #[test]
    fn patch_mean_of_psnr() {
        // left patch MSE 0.01 (20 dB), right patch MSE 1e-4 (40 dB)
        let a = Image::filled(16, 32, 1, 0.5).unwrap();
        let b = Image::from_fn(16, 32, 1, |_, c, _| if c < 16 { 0.6 } else { 0.51 }).unwrap();
        let rep = patch_eval(&a, &b, 16).unwrap();
        assert!((rep.per_patch[0].psnr_db - 20.0).abs() < 1e-9);
        assert!((rep.per_patch[1].psnr_db - 40.0).abs() < 1e-9);
        assert!((rep.psnr_db - 30.0).abs() < 1e-9);
    }
}
