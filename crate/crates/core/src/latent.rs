//! Token packing and the lossless space-to-depth stand-in for a VAE.
//!
//! Packing by a factor `f` folds every `f×f` spatial block into the channels of
//! one token. Sub-pixels are taken in row-major order (top-left, top-right,
//! bottom-left, bottom-right for `f = 2`) and each contributes a contiguous
//! slice of `c` channels: output channel `(a·f + b)·c + k` holds channel `k` of
//! the sub-pixel at block offset `(a, b)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// An `h×w` grid of `c`-channel tokens, token-contiguous and row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGrid {
    h: usize,
    w: usize,
    c: usize,
    data: Vec<f64>,
}

impl TokenGrid {
    pub fn new(h: usize, w: usize, c: usize, data: Vec<f64>) -> Result<Self> {
        if h == 0 || w == 0 || c == 0 {
            return Err(Error::InvalidArgument(format!(
                "token grid extents must be >= 1, got {h}x{w}x{c}"
            )));
        }
        if data.len() != h * w * c {
            return Err(Error::ShapeMismatch(format!(
                "{h}x{w}x{c} token grid needs {} values, got {}",
                h * w * c,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("TokenGrid::new"));
        }
        Ok(Self { h, w, c, data })
    }

    pub fn zeros(h: usize, w: usize, c: usize) -> Result<Self> {
        Self::new(h, w, c, vec![0.0; h * w * c])
    }

    pub fn from_fn(
        h: usize,
        w: usize,
        c: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(h * w * c);
        for i in 0..h {
            for j in 0..w {
                for k in 0..c {
                    data.push(f(i, j, k));
                }
            }
        }
        Self::new(h, w, c, data)
    }

    /// Every token set to a copy of `token`.
    pub fn repeat(token: &[f64], h: usize, w: usize) -> Result<Self> {
        let data = token.iter().copied().cycle().take(h * w * token.len()).collect();
        Self::new(h, w, token.len(), data)
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.h, self.w, self.c)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn token(&self, i: usize, j: usize) -> &[f64] {
        let start = (i * self.w + j) * self.c;
        &self.data[start..start + self.c]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.w + j) * self.c + k]
    }

    /// Reorders channels: output channel `k` takes input channel `order[k]`.
    pub fn permute_channels(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.c || order.iter().any(|&k| k >= self.c) {
            return Err(Error::InvalidArgument("channel order is not a permutation".into()));
        }
        Self::from_fn(self.h, self.w, self.c, |i, j, k| self.get(i, j, order[k]))
    }
}

/// Spatial folding factor (2 for token packing, the VAE stride for encoding).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PackFactor(usize);

impl PackFactor {
    pub fn new(f: usize) -> Result<Self> {
        if f == 0 {
            return Err(Error::InvalidArgument("pack factor must be >= 1".into()));
        }
        Ok(Self(f))
    }

    pub fn get(self) -> usize {
        self.0
    }
}

fn check_divides(what: &'static str, value: usize, f: usize) -> Result<()> {
    if !value.is_multiple_of(f) {
        return Err(Error::NotDivisible { what, value, by: f });
    }
    Ok(())
}

/// Space-to-depth over a raw `(h, w, c)` buffer.
fn space_to_depth(h: usize, w: usize, c: usize, data: &[f64], f: usize) -> Vec<f64> {
    let (oh, ow, oc) = (h / f, w / f, c * f * f);
    let mut out = vec![0.0; oh * ow * oc];
    for i in 0..oh {
        for j in 0..ow {
            let base = (i * ow + j) * oc;
            for a in 0..f {
                for b in 0..f {
                    let src = ((i * f + a) * w + (j * f + b)) * c;
                    let dst = base + (a * f + b) * c;
                    out[dst..dst + c].copy_from_slice(&data[src..src + c]);
                }
            }
        }
    }
    out
}

/// Depth-to-space over a raw `(h, w, c)` buffer; `c` divisible by `f²`.
fn depth_to_space(h: usize, w: usize, c: usize, data: &[f64], f: usize) -> Vec<f64> {
    let (oh, ow, oc) = (h * f, w * f, c / (f * f));
    let mut out = vec![0.0; oh * ow * oc];
    for i in 0..h {
        for j in 0..w {
            let base = (i * w + j) * c;
            for a in 0..f {
                for b in 0..f {
                    let dst = ((i * f + a) * ow + (j * f + b)) * oc;
                    let src = base + (a * f + b) * oc;
                    out[dst..dst + oc].copy_from_slice(&data[src..src + oc]);
                }
            }
        }
    }
    out
}

/// Folds `f×f` token blocks into single tokens: `(h, w, c) → (h/f, w/f, c·f²)`.
pub fn pack(g: &TokenGrid, f: PackFactor) -> Result<TokenGrid> {
    let f = f.get();
    check_divides("token grid height", g.h, f)?;
    check_divides("token grid width", g.w, f)?;
    TokenGrid::new(g.h / f, g.w / f, g.c * f * f, space_to_depth(g.h, g.w, g.c, &g.data, f))
}

/// Exact inverse of [`pack`]: `(h, w, c) → (h·f, w·f, c/f²)`.
pub fn unpack(g: &TokenGrid, f: PackFactor) -> Result<TokenGrid> {
    let f = f.get();
    check_divides("token channel count", g.c, f * f)?;
    TokenGrid::new(g.h * f, g.w * f, g.c / (f * f), depth_to_space(g.h, g.w, g.c, &g.data, f))
}

/// Channel order that makes one unpack at `f1·f2` equal an unpack at `f1`
/// followed by an unpack at `f2`.
///
/// For a grid `g` with `c` channels:
/// `unpack(unpack(g, f1), f2) == unpack(g.permute_channels(&order), f1·f2)`.
pub fn composed_unpack_order(c: usize, f1: usize, f2: usize) -> Result<Vec<usize>> {
    let base = c / (f1 * f1 * f2 * f2);
    if base == 0 || base * f1 * f1 * f2 * f2 != c {
        return Err(Error::NotDivisible {
            what: "token channel count",
            value: c,
            by: f1 * f1 * f2 * f2,
        });
    }
    let f = f1 * f2;
    let mut order = vec![0; c];
    for big_a in 0..f {
        for big_b in 0..f {
            let (a1, a2) = (big_a / f2, big_a % f2);
            let (b1, b2) = (big_b / f2, big_b % f2);
            for k in 0..base {
                let dst = (big_a * f + big_b) * base + k;
                let src = (a1 * f1 + b1) * (f2 * f2 * base) + (a2 * f2 + b2) * base + k;
                order[dst] = src;
            }
        }
    }
    Ok(order)
}

/// Lossless space-to-depth encoder standing in for a VAE of stride `f`.
pub fn encode_surrogate(img: &Image, f: PackFactor) -> Result<TokenGrid> {
    let fv = f.get();
    check_divides("image height", img.height(), fv)?;
    check_divides("image width", img.width(), fv)?;
    let (h, w, c) = img.shape();
    TokenGrid::new(h / fv, w / fv, c * fv * fv, space_to_depth(h, w, c, img.data(), fv))
}

/// Depth-to-space decoder, the exact inverse of [`encode_surrogate`].
/// Values are not clamped.
pub fn decode_surrogate(g: &TokenGrid, f: PackFactor) -> Result<Image> {
    let fv = f.get();
    check_divides("latent channel count", g.c, fv * fv)?;
    let c = g.c / (fv * fv);
    Image::new(g.h * fv, g.w * fv, c, depth_to_space(g.h, g.w, g.c, &g.data, fv))
}

/// Decodes an `h×w` grid of identical copies of `token` at stride `f`.
///
/// This is the canonical synthetic grid artifact: every `f×f` tile of the
/// output repeats the token's sub-pixel pattern.
pub fn periodic_tile_demo(token: &[f64], h: usize, w: usize, f: PackFactor) -> Result<Image> {
    let ff = f.get() * f.get();
    if token.is_empty() || !token.len().is_multiple_of(ff) || !matches!(token.len() / ff, 1 | 3) {
        return Err(Error::ShapeMismatch(format!(
            "tile token length {} must be f²·C with C in {{1, 3}} (f² = {ff})",
            token.len()
        )));
    }
    decode_surrogate(&TokenGrid::repeat(token, h, w)?, f)
}
