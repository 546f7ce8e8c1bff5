//! Pixel and scalar grids, PNG I/O and luma conversion.
//!
//! [`Image`] stores samples interleaved and row-major: the sample for row `r`,
//! column `c`, channel `k` lives at `(r * width + c) * channels + k`. This is
//! the only layout exposed by the crate.

use std::path::Path;

use image::{DynamicImage, ImageEncoder, ImageFormat, ImageReader};
use log::warn;

use crate::error::{Error, Result};

/// BT.601 full-range luma weights for (R, G, B).
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// An H×W×C image with samples nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "image extents must be at least 1x1, got {height}x{width}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidArgument(format!(
                "images have 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::ShapeMismatch(format!(
                "{height}x{width}x{channels} image needs {} samples, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Image::new"));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    /// Builds an image by evaluating `f(row, col, channel)` at every sample.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for r in 0..height {
            for c in 0..width {
                for k in 0..channels {
                    data.push(f(r, c, k));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    /// Single-channel image from a plane, without clamping.
    pub fn from_plane(plane: &Grid2D) -> Result<Self> {
        Self::new(plane.rows(), plane.cols(), 1, plane.data().to_vec())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, channel: usize) -> usize {
        (row * self.width + col) * self.channels + channel
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[self.index(row, col, channel)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, channel: usize, value: f64) {
        let i = self.index(row, col, channel);
        self.data[i] = value;
    }

    /// One channel as a scalar plane.
    pub fn channel_plane(&self, channel: usize) -> Grid2D {
        let data = self
            .data
            .iter()
            .skip(channel)
            .step_by(self.channels)
            .copied()
            .collect();
        Grid2D {
            rows: self.height,
            cols: self.width,
            data,
        }
    }

    /// Copy with every sample clamped into `[0, 1]`.
    pub fn clamped(&self) -> Self {
        Self {
            data: self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
            ..self.clone()
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(
            self.height,
            self.width,
            self.channels,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Rectangular crop `[row0, row0 + rows) × [col0, col0 + cols)`.
    pub fn crop(&self, row0: usize, col0: usize, rows: usize, cols: usize) -> Result<Self> {
        if row0 + rows > self.height || col0 + cols > self.width {
            return Err(Error::OutOfRange(format!(
                "crop {rows}x{cols} at ({row0},{col0}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        Self::from_fn(rows, cols, self.channels, |r, c, k| {
            self.get(row0 + r, col0 + c, k)
        })
    }

    pub fn flip_horizontal(&self) -> Self {
        let w = self.width;
        Self::from_fn(self.height, w, self.channels, |r, c, k| self.get(r, w - 1 - c, k))
            .expect("flip preserves shape")
    }

    pub fn flip_vertical(&self) -> Self {
        let h = self.height;
        Self::from_fn(h, self.width, self.channels, |r, c, k| self.get(h - 1 - r, c, k))
            .expect("flip preserves shape")
    }

    /// Luma plane: BT.601 for RGB, the plane itself for grayscale.
    pub fn luma(&self) -> Grid2D {
        match self.channels {
            3 => rgb_to_y(self).expect("three channels"),
            _ => self.channel_plane(0),
        }
    }
}

/// A dense, row-major plane of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Grid2D {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{rows}x{cols} grid needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Grid2D::new"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r)).expect("transpose is finite")
    }

    /// Linearly rescales `[min, max]` onto `[0, 1]` as a grayscale image.
    /// A flat grid maps to all zeros.
    pub fn to_normalized_image(&self) -> Image {
        let (lo, hi) = self.min_max();
        let span = hi - lo;
        let data = self
            .data
            .iter()
            .map(|&v| if span > 0.0 { (v - lo) / span } else { 0.0 })
            .collect();
        Image::new(self.rows, self.cols, 1, data).expect("normalized grid is a valid image")
    }

    /// Rows of comma-separated decimals, one line per grid row.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.data.len() * 12);
        for r in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|c| format!("{}", self.get(r, c))).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// BT.601 full-range luma `Y = 0.299 R + 0.587 G + 0.114 B`.
pub fn rgb_to_y(img: &Image) -> Result<Grid2D> {
    if img.channels() != 3 {
        return Err(Error::InvalidArgument(format!(
            "luma conversion needs 3 channels, got {}",
            img.channels()
        )));
    }
    let data = img
        .data()
        .chunks_exact(3)
        .map(|px| LUMA_WEIGHTS[0] * px[0] + LUMA_WEIGHTS[1] * px[1] + LUMA_WEIGHTS[2] * px[2])
        .collect();
    Grid2D::new(img.height(), img.width(), data)
}

/// Loads an 8- or 16-bit grayscale or RGB PNG, normalizing by the bit-depth
/// maximum. Alpha channels are dropped with a warning.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingFile {
            path: path.to_path_buf(),
        });
    }
    let reader = ImageReader::open(path)
        .map_err(|source| Error::Read {
            path: path.to_path_buf(),
            source,
        })?
        .with_guessed_format()
        .map_err(|source| Error::Read {
            path: path.to_path_buf(),
            source,
        })?;
    match reader.format() {
        Some(ImageFormat::Png) => {}
        other => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                detail: match other {
                    Some(f) => format!("{f:?} is not PNG"),
                    None => "unrecognized file signature".to_string(),
                },
            })
        }
    }
    let decoded = reader.decode().map_err(|e| Error::CorruptData {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    from_dynamic(decoded, path)
}

fn from_dynamic(img: DynamicImage, path: &Path) -> Result<Image> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    const MAX8: f64 = u8::MAX as f64;
    const MAX16: f64 = u16::MAX as f64;
    let drop_alpha = |kind: &str| {
        warn!("{}: discarding alpha channel of {kind} image", path.display());
    };
    let (channels, data): (usize, Vec<f64>) = match img {
        DynamicImage::ImageLuma8(b) => (1, b.into_raw().iter().map(|&v| v as f64 / MAX8).collect()),
        DynamicImage::ImageLuma16(b) => {
            (1, b.into_raw().iter().map(|&v| v as f64 / MAX16).collect())
        }
        DynamicImage::ImageRgb8(b) => (3, b.into_raw().iter().map(|&v| v as f64 / MAX8).collect()),
        DynamicImage::ImageRgb16(b) => {
            (3, b.into_raw().iter().map(|&v| v as f64 / MAX16).collect())
        }
        DynamicImage::ImageLumaA8(b) => {
            drop_alpha("gray+alpha");
            (1, b.into_raw().chunks_exact(2).map(|p| p[0] as f64 / MAX8).collect())
        }
        DynamicImage::ImageLumaA16(b) => {
            drop_alpha("gray+alpha");
            (1, b.into_raw().chunks_exact(2).map(|p| p[0] as f64 / MAX16).collect())
        }
        DynamicImage::ImageRgba8(b) => {
            drop_alpha("RGBA");
            let raw = b.into_raw();
            (3, raw.chunks_exact(4).flat_map(|p| p[..3].iter().map(|&v| v as f64 / MAX8)).collect())
        }
        DynamicImage::ImageRgba16(b) => {
            drop_alpha("RGBA");
            let raw = b.into_raw();
            (3, raw.chunks_exact(4).flat_map(|p| p[..3].iter().map(|&v| v as f64 / MAX16)).collect())
        }
        other => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                detail: format!("pixel layout {:?}", other.color()),
            })
        }
    };
    Image::new(h, w, channels, data)
}

/// Quantizes one sample to a byte: clamp to `[0, 1]`, then `floor(x * 255 + 0.5)`
/// (round half up).
#[inline]
pub fn quantize_u8(x: f64) -> u8 {
    (x.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Writes an 8-bit PNG (grayscale or RGB) using [`quantize_u8`].
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = img.data().iter().map(|&v| quantize_u8(v)).collect();
    let color = match img.channels() {
        1 => image::ExtendedColorType::L8,
        _ => image::ExtendedColorType::Rgb8,
    };
    let mut png = Vec::new();
    image::codecs::png::PngEncoder::new(&mut png)
        .write_image(&bytes, img.width() as u32, img.height() as u32, color)
        .map_err(|e| Error::Write {
            path: path.to_path_buf(),
            source: std::io::Error::other(e.to_string()),
        })?;
    crate::io::write_atomic(path, &png)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(Image::new(0, 2, 1, vec![]).is_err());
        assert!(Image::new(2, 2, 2, vec![0.0; 8]).is_err());
        assert!(Image::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(Image::new(1, 1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn luma_of_primaries() {
        let white = Image::filled(2, 3, 3, 1.0).unwrap();
        assert!(rgb_to_y(&white).unwrap().data().iter().all(|&y| (y - 1.0).abs() < 1e-15));
        let black = Image::filled(2, 3, 3, 0.0).unwrap();
        assert!(rgb_to_y(&black).unwrap().data().iter().all(|&y| y == 0.0));
        let red = Image::from_fn(1, 1, 3, |_, _, k| if k == 0 { 1.0 } else { 0.0 }).unwrap();
        assert_eq!(rgb_to_y(&red).unwrap().get(0, 0), 0.299);
        let gray = Image::filled(1, 1, 1, 0.5).unwrap();
        assert!(rgb_to_y(&gray).is_err());
    }

    #[test]
    fn quantization_rule() {
        assert_eq!(quantize_u8(0.5), 128);
        assert_eq!(quantize_u8(1.2), 255);
        assert_eq!(quantize_u8(-0.3), 0);
        assert_eq!(quantize_u8(1.0), 255);
        assert_eq!(quantize_u8(64.0 / 255.0), 64);
    }

    #[test]
    fn channel_plane_and_crop() {
        let img = Image::from_fn(3, 4, 3, |r, c, k| (r * 100 + c * 10 + k) as f64 / 1000.0).unwrap();
        let g = img.channel_plane(2);
        assert_eq!(g.get(1, 3), 0.132);
        let crop = img.crop(1, 2, 2, 2).unwrap();
        assert_eq!(crop.get(0, 0, 1), img.get(1, 2, 1));
        assert!(img.crop(2, 2, 2, 2).is_err());
    }

    #[test]
    fn normalized_export_spans_unit_range() {
        let g = Grid2D::from_fn(2, 2, |r, c| (r * 2 + c) as f64 - 1.0).unwrap();
        let img = g.to_normalized_image();
        assert_eq!(img.get(0, 0, 0), 0.0);
        assert_eq!(img.get(1, 1, 0), 1.0);
        assert_eq!(g.to_csv(), "-1,0\n1,2\n");
    }
}
