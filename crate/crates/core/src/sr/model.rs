//! A small DiT-style transformer that maps an anchored latent token grid to a
//! clean-latent prediction in one pass, with hand-written backpropagation.
//!
//! ```text
//! H₀  = X·W_in + b_in
//! Hₗ' = Hₗ + MHA(LN(Hₗ))            rope on queries and keys, per head
//! Hₗ₊₁ = Hₗ' + W₂·silu(W₁·LN(Hₗ') + b₁) + b₂
//! out = X + LN(H_L)·W_out + b_out
//! ```
//!
//! Layer norms carry no affine parameters. `W_out` and `b_out` start at zero,
//! so an untrained model returns its input unchanged.

use ndarray::{s, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::TokenGrid;
use crate::rng::{rng_stream, RngStream};
use crate::rope::{phase_deltas, rotate_in_place};

use super::config::ToyModelConfig;
use super::flow::FlowState;

const LN_EPS: f64 = 1e-5;
const INIT_STREAM: u64 = 0x1417;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub wo: Array2<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// All trainable tensors. Matrices multiply row vectors from the right.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyParams {
    pub w_in: Array2<f64>,
    pub b_in: Array1<f64>,
    pub blocks: Vec<BlockParams>,
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
}

/// A named tensor as stored in checkpoints (row-major data).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

fn gaussian(rng: &mut RngStream, rows: usize, cols: usize, std: f64) -> Array2<f64> {
    Array2::from_shape_vec((rows, cols), rng.normals(rows * cols).into_iter().map(|v| v * std).collect())
        .expect("shape matches length")
}

impl ToyParams {
    /// All-zero parameters with the shapes implied by `cfg`.
    pub fn zeros(cfg: &ToyModelConfig) -> Self {
        let (c, d, f) = (cfg.token_channels(), cfg.token_dim, cfg.ffn_hidden);
        let block = BlockParams {
            wq: Array2::zeros((d, d)),
            wk: Array2::zeros((d, d)),
            wv: Array2::zeros((d, d)),
            wo: Array2::zeros((d, d)),
            w1: Array2::zeros((d, f)),
            b1: Array1::zeros(f),
            w2: Array2::zeros((f, d)),
            b2: Array1::zeros(d),
        };
        Self {
            w_in: Array2::zeros((c, d)),
            b_in: Array1::zeros(d),
            blocks: vec![block; cfg.layers],
            w_out: Array2::zeros((d, c)),
            b_out: Array1::zeros(c),
        }
    }

    /// Seeded initialization: Gaussian weights with variance `1/fan_in`,
    /// zero biases, zero output projection.
    pub fn init(cfg: &ToyModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = rng_stream(cfg.seed.derive(INIT_STREAM));
        let (c, d, f) = (cfg.token_channels(), cfg.token_dim, cfg.ffn_hidden);
        let mut p = Self::zeros(cfg);
        p.w_in = gaussian(&mut rng, c, d, (c as f64).recip().sqrt());
        let sd = (d as f64).recip().sqrt();
        for b in &mut p.blocks {
            b.wq = gaussian(&mut rng, d, d, sd);
            b.wk = gaussian(&mut rng, d, d, sd);
            b.wv = gaussian(&mut rng, d, d, sd);
            b.wo = gaussian(&mut rng, d, d, sd);
            b.w1 = gaussian(&mut rng, d, f, sd);
            b.w2 = gaussian(&mut rng, f, d, (f as f64).recip().sqrt());
        }
        Ok(p)
    }

    fn named(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        fn m(a: &Array2<f64>) -> (Vec<usize>, &[f64]) {
            (a.shape().to_vec(), a.as_slice().expect("standard layout"))
        }
        fn v(a: &Array1<f64>) -> (Vec<usize>, &[f64]) {
            (a.shape().to_vec(), a.as_slice().expect("standard layout"))
        }
        let mut out: Vec<(String, Vec<usize>, &[f64])> = Vec::new();
        let (s, d) = m(&self.w_in);
        out.push(("w_in".into(), s, d));
        let (s, d) = v(&self.b_in);
        out.push(("b_in".into(), s, d));
        for (l, b) in self.blocks.iter().enumerate() {
            for (name, t) in [("wq", &b.wq), ("wk", &b.wk), ("wv", &b.wv), ("wo", &b.wo), ("w1", &b.w1)] {
                let (s, d) = m(t);
                out.push((format!("blocks.{l}.{name}"), s, d));
            }
            let (s, d) = v(&b.b1);
            out.push((format!("blocks.{l}.b1"), s, d));
            let (s, d) = m(&b.w2);
            out.push((format!("blocks.{l}.w2"), s, d));
            let (s, d) = v(&b.b2);
            out.push((format!("blocks.{l}.b2"), s, d));
        }
        let (s, d) = m(&self.w_out);
        out.push(("w_out".into(), s, d));
        let (s, d) = v(&self.b_out);
        out.push(("b_out".into(), s, d));
        out
    }

    /// Mutable flat views in the same order as [`ToyParams::to_tensors`].
    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![self.w_in.as_slice_mut().expect("standard layout")];
        out.push(self.b_in.as_slice_mut().expect("standard layout"));
        for b in &mut self.blocks {
            for a in [&mut b.wq, &mut b.wk, &mut b.wv, &mut b.wo, &mut b.w1] {
                out.push(a.as_slice_mut().expect("standard layout"));
            }
            out.push(b.b1.as_slice_mut().expect("standard layout"));
            out.push(b.w2.as_slice_mut().expect("standard layout"));
            out.push(b.b2.as_slice_mut().expect("standard layout"));
        }
        out.push(self.w_out.as_slice_mut().expect("standard layout"));
        out.push(self.b_out.as_slice_mut().expect("standard layout"));
        out
    }

    pub fn to_tensors(&self) -> Vec<Tensor> {
        self.named()
            .into_iter()
            .map(|(name, shape, data)| Tensor { name, shape, data: data.to_vec() })
            .collect()
    }

    /// Rebuilds parameters for `cfg`, checking every name and shape.
    pub fn from_tensors(cfg: &ToyModelConfig, tensors: &[Tensor]) -> Result<Self> {
        let mut p = Self::zeros(cfg);
        let expected: Vec<(String, Vec<usize>)> =
            p.named().into_iter().map(|(n, s, _)| (n, s)).collect();
        if expected.len() != tensors.len() {
            return Err(Error::Format {
                what: "checkpoint",
                detail: format!("expected {} tensors, found {}", expected.len(), tensors.len()),
            });
        }
        for ((name, shape), t) in expected.iter().zip(tensors) {
            if &t.name != name || &t.shape != shape || t.data.len() != shape.iter().product::<usize>() {
                return Err(Error::Format {
                    what: "checkpoint",
                    detail: format!("tensor {} {:?} does not match expected {name} {shape:?}", t.name, t.shape),
                });
            }
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("checkpoint tensor"));
            }
        }
        for (dst, t) in p.slices_mut().into_iter().zip(tensors) {
            dst.copy_from_slice(&t.data);
        }
        Ok(p)
    }

    pub fn num_params(&self) -> usize {
        self.named().iter().map(|(_, _, d)| d.len()).sum()
    }

    /// `self −= lr · grad`.
    pub fn sgd_step(&mut self, grad: &ToyParams, lr: f64) {
        let grads: Vec<Vec<f64>> = grad.named().into_iter().map(|(_, _, d)| d.to_vec()).collect();
        for (p, g) in self.slices_mut().into_iter().zip(&grads) {
            for (pv, gv) in p.iter_mut().zip(g) {
                *pv -= lr * gv;
            }
        }
    }

    fn check(&self, cfg: &ToyModelConfig) -> Result<()> {
        let want = Self::zeros(cfg);
        let same = self.named().iter().zip(want.named().iter()).all(|(a, b)| a.1 == b.1)
            && self.blocks.len() == want.blocks.len();
        if !same {
            return Err(Error::ShapeMismatch("parameter shapes do not match the model config".into()));
        }
        Ok(())
    }
}

/// Row-major token coordinates of an `h×w` grid.
pub fn grid_positions(h: usize, w: usize) -> Vec<(i64, i64)> {
    (0..h).flat_map(|i| (0..w).map(move |j| (i as i64, j as i64))).collect()
}

pub fn tokens_to_matrix(g: &TokenGrid) -> Array2<f64> {
    Array2::from_shape_vec((g.h() * g.w(), g.c()), g.data().to_vec()).expect("token grid is contiguous")
}

pub fn matrix_to_tokens(m: Array2<f64>, h: usize, w: usize) -> Result<TokenGrid> {
    let c = m.ncols();
    let data = m.as_standard_layout().iter().copied().collect();
    TokenGrid::new(h, w, c, data)
}

fn layer_norm(x: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
    let n = x.ncols() as f64;
    let mut y = x.clone();
    let mut rstd = Array1::zeros(x.nrows());
    for (mut row, r) in y.rows_mut().into_iter().zip(rstd.iter_mut()) {
        let mu = row.sum() / n;
        row.mapv_inplace(|v| v - mu);
        let var = row.iter().map(|v| v * v).sum::<f64>() / n;
        *r = (var + LN_EPS).sqrt().recip();
        row.mapv_inplace(|v| v * *r);
    }
    (y, rstd)
}

fn layer_norm_backward(y: &Array2<f64>, rstd: &Array1<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let n = y.ncols() as f64;
    let mut dx = dy.clone();
    for (i, mut row) in dx.rows_mut().into_iter().enumerate() {
        let yr = y.row(i);
        let mean_dy = row.sum() / n;
        let mean_dy_y = row.iter().zip(yr.iter()).map(|(a, b)| a * b).sum::<f64>() / n;
        for (d, yv) in row.iter_mut().zip(yr.iter()) {
            *d = rstd[i] * (*d - mean_dy - yv * mean_dy_y);
        }
    }
    dx
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn rotate_heads(m: &mut Array2<f64>, positions: &[(i64, i64)], deltas: &[f64], head_dim: usize, sign: i64) {
    for (mut row, &(ph, pw)) in m.rows_mut().into_iter().zip(positions) {
        let row = row.as_slice_mut().expect("standard layout");
        for head in row.chunks_exact_mut(head_dim) {
            rotate_in_place(head, (sign * ph, sign * pw), deltas);
        }
    }
}

fn softmax_rows(m: &mut Array2<f64>) {
    for mut row in m.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
}

struct BlockCache {
    u1: Array2<f64>,
    rstd1: Array1<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    o: Array2<f64>,
    u2: Array2<f64>,
    rstd2: Array1<f64>,
    z1: Array2<f64>,
    a1: Array2<f64>,
}

/// Intermediate activations kept for the backward pass.
pub struct ForwardCache {
    x: Array2<f64>,
    positions: Vec<(i64, i64)>,
    blocks: Vec<BlockCache>,
    uf: Array2<f64>,
    rstdf: Array1<f64>,
}

fn check_input(x: &Array2<f64>, positions: &[(i64, i64)], cfg: &ToyModelConfig, params: &ToyParams) -> Result<()> {
    cfg.validate()?;
    params.check(cfg)?;
    if x.ncols() != cfg.token_channels() {
        return Err(Error::ShapeMismatch(format!(
            "tokens have {} channels, model expects {}",
            x.ncols(),
            cfg.token_channels()
        )));
    }
    if x.nrows() != positions.len() || x.nrows() == 0 {
        return Err(Error::ShapeMismatch(format!(
            "{} tokens but {} positions",
            x.nrows(),
            positions.len()
        )));
    }
    Ok(())
}

/// Forward pass over `N` tokens (rows of `x`) at explicit grid positions.
pub fn forward_with_cache(
    x: &Array2<f64>,
    positions: &[(i64, i64)],
    cfg: &ToyModelConfig,
    params: &ToyParams,
) -> Result<(Array2<f64>, ForwardCache)> {
    check_input(x, positions, cfg, params)?;
    let dh = cfg.head_dim();
    let deltas = phase_deltas(&cfg.effective_rope());
    let scale = (dh as f64).sqrt().recip();
    let mut h = x.dot(&params.w_in) + &params.b_in;
    let mut caches = Vec::with_capacity(params.blocks.len());
    for b in &params.blocks {
        let (u1, rstd1) = layer_norm(&h);
        let mut q = u1.dot(&b.wq);
        let mut k = u1.dot(&b.wk);
        let v = u1.dot(&b.wv);
        rotate_heads(&mut q, positions, &deltas, dh, 1);
        rotate_heads(&mut k, positions, &deltas, dh, 1);
        let mut o = Array2::zeros(h.raw_dim());
        let mut probs = Vec::with_capacity(cfg.heads);
        for head in 0..cfg.heads {
            let cols = s![.., head * dh..(head + 1) * dh];
            let mut p = q.slice(cols).dot(&k.slice(cols).t()) * scale;
            softmax_rows(&mut p);
            o.slice_mut(cols).assign(&p.dot(&v.slice(cols)));
            probs.push(p);
        }
        h = h + o.dot(&b.wo);
        let (u2, rstd2) = layer_norm(&h);
        let z1 = u2.dot(&b.w1) + &b.b1;
        let a1 = z1.mapv(|z| z * sigmoid(z));
        h = h + a1.dot(&b.w2) + &b.b2;
        caches.push(BlockCache { u1, rstd1, q, k, v, probs, o, u2, rstd2, z1, a1 });
    }
    let (uf, rstdf) = layer_norm(&h);
    let out = x + &uf.dot(&params.w_out) + &params.b_out;
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("toy denoiser forward"));
    }
    let cache = ForwardCache {
        x: x.clone(),
        positions: positions.to_vec(),
        blocks: caches,
        uf,
        rstdf,
    };
    Ok((out, cache))
}

pub fn forward_tokens(
    x: &Array2<f64>,
    positions: &[(i64, i64)],
    cfg: &ToyModelConfig,
    params: &ToyParams,
) -> Result<Array2<f64>> {
    forward_with_cache(x, positions, cfg, params).map(|(out, _)| out)
}

/// Parameter gradient of `Σ dout ⊙ out`.
pub fn backward(cache: &ForwardCache, cfg: &ToyModelConfig, params: &ToyParams, dout: &Array2<f64>) -> ToyParams {
    let dh_dim = cfg.head_dim();
    let deltas = phase_deltas(&cfg.effective_rope());
    let scale = (dh_dim as f64).sqrt().recip();
    let mut g = ToyParams::zeros(cfg);
    g.w_out = cache.uf.t().dot(dout);
    g.b_out = dout.sum_axis(Axis(0));
    let mut dh = layer_norm_backward(&cache.uf, &cache.rstdf, &dout.dot(&params.w_out.t()));
    for (l, (b, c)) in params.blocks.iter().zip(&cache.blocks).enumerate().rev() {
        let gb = &mut g.blocks[l];
        // feedforward
        gb.b2 = dh.sum_axis(Axis(0));
        gb.w2 = c.a1.t().dot(&dh);
        let da1 = dh.dot(&b.w2.t());
        let mut dz1 = da1;
        dz1.zip_mut_with(&c.z1, |d, &z| {
            let sg = sigmoid(z);
            *d *= sg * (1.0 + z * (1.0 - sg));
        });
        gb.b1 = dz1.sum_axis(Axis(0));
        gb.w1 = c.u2.t().dot(&dz1);
        dh = dh + layer_norm_backward(&c.u2, &c.rstd2, &dz1.dot(&b.w1.t()));
        // attention
        gb.wo = c.o.t().dot(&dh);
        let d_o = dh.dot(&b.wo.t());
        let mut dq = Array2::zeros(c.q.raw_dim());
        let mut dk = Array2::zeros(c.k.raw_dim());
        let mut dv = Array2::zeros(c.v.raw_dim());
        for (head, p) in c.probs.iter().enumerate() {
            let cols = s![.., head * dh_dim..(head + 1) * dh_dim];
            let doh = d_o.slice(cols);
            dv.slice_mut(cols).assign(&p.t().dot(&doh));
            let dp = doh.dot(&c.v.slice(cols).t());
            let mut ds = dp;
            for (mut row, prow) in ds.rows_mut().into_iter().zip(p.rows()) {
                let dot: f64 = row.iter().zip(prow.iter()).map(|(a, b)| a * b).sum();
                row.zip_mut_with(&prow, |d, &pv| *d = pv * (*d - dot));
            }
            dq.slice_mut(cols).assign(&(ds.dot(&c.k.slice(cols)) * scale));
            dk.slice_mut(cols).assign(&(ds.t().dot(&c.q.slice(cols)) * scale));
        }
        rotate_heads(&mut dq, &cache.positions, &deltas, dh_dim, -1);
        rotate_heads(&mut dk, &cache.positions, &deltas, dh_dim, -1);
        gb.wq = c.u1.t().dot(&dq);
        gb.wk = c.u1.t().dot(&dk);
        gb.wv = c.u1.t().dot(&dv);
        let du1 = dq.dot(&b.wq.t()) + dk.dot(&b.wk.t()) + dv.dot(&b.wv.t());
        dh = dh + layer_norm_backward(&c.u1, &c.rstd1, &du1);
    }
    g.w_in = cache.x.t().dot(&dh);
    g.b_in = dh.sum_axis(Axis(0));
    g
}

/// One forward pass on a packed token grid at its natural positions.
pub fn toy_denoiser_forward(input: &TokenGrid, cfg: &ToyModelConfig, params: &ToyParams) -> Result<TokenGrid> {
    let out = forward_tokens(&tokens_to_matrix(input), &grid_positions(input.h(), input.w()), cfg, params)?;
    matrix_to_tokens(out, input.h(), input.w())
}

/// Anything that maps a flow state to a clean-latent prediction.
pub trait Denoiser {
    fn denoise(&self, state: &FlowState) -> Result<TokenGrid>;
}

/// The toy transformer bound to a config and parameters.
#[derive(Debug, Clone, Copy)]
pub struct ToyDenoiser<'a> {
    pub cfg: &'a ToyModelConfig,
    pub params: &'a ToyParams,
}

impl Denoiser for ToyDenoiser<'_> {
    fn denoise(&self, state: &FlowState) -> Result<TokenGrid> {
        toy_denoiser_forward(&state.input, self.cfg, self.params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Seed;
    use crate::rope::RopeConfig;

    /// Narrow model so finite differences stay cheap.
    fn small_cfg(theta: f64) -> ToyModelConfig {
        ToyModelConfig {
            token_dim: 16,
            heads: 2,
            layers: 2,
            ffn_hidden: 12,
            rope: RopeConfig { d: 4, theta, grid_h: 4, grid_w: 4 },
            surrogate_factor: crate::latent::PackFactor::new(1).unwrap(),
            pack_factor: crate::latent::PackFactor::new(2).unwrap(),
            channels: 1,
            seed: Seed(5),
            ..Default::default()
        }
    }

    fn randomize_all(p: &mut ToyParams, seed: u64, std: f64) {
        let mut rng = rng_stream(Seed(seed));
        for s in p.slices_mut() {
            for v in s.iter_mut() {
                *v = rng.normal() * std;
            }
        }
    }

    fn random_tokens(seed: u64, n: usize, c: usize) -> Array2<f64> {
        let mut rng = rng_stream(Seed(seed));
        Array2::from_shape_vec((n, c), rng.normals(n * c)).unwrap()
    }

    #[test]
    fn identity_at_init() {
        let cfg = ToyModelConfig::default();
        let p = ToyParams::init(&cfg).unwrap();
        let mut rng = rng_stream(Seed(9));
        let x = TokenGrid::from_fn(8, 8, 192, |_, _, _| rng.uniform()).unwrap();
        assert_eq!(toy_denoiser_forward(&x, &cfg, &p).unwrap(), x);
    }

    #[test]
    fn deterministic_init_and_forward() {
        let cfg = small_cfg(100.0);
        let mut a = ToyParams::init(&cfg).unwrap();
        let mut b = ToyParams::init(&cfg).unwrap();
        assert_eq!(a, b);
        randomize_all(&mut a, 3, 0.3);
        randomize_all(&mut b, 3, 0.3);
        let x = random_tokens(4, 16, 4);
        let pos = grid_positions(4, 4);
        let ya = forward_tokens(&x, &pos, &cfg, &a).unwrap();
        let yb = forward_tokens(&x, &pos, &cfg, &b).unwrap();
        assert_eq!(ya, yb);
    }

    #[test]
    fn joint_permutation_equivariance() {
        let cfg = small_cfg(100.0);
        let mut p = ToyParams::init(&cfg).unwrap();
        randomize_all(&mut p, 11, 0.4);
        let x = random_tokens(12, 16, 4);
        let pos = grid_positions(4, 4);
        let y = forward_tokens(&x, &pos, &cfg, &p).unwrap();
        let mut rng = rng_stream(Seed(13));
        let mut perm: Vec<usize> = (0..16).collect();
        for i in (1..16).rev() {
            perm.swap(i, rng.index(i + 1));
        }
        let xp = x.select(Axis(0), &perm);
        let pp: Vec<_> = perm.iter().map(|&i| pos[i]).collect();
        let yp = forward_tokens(&xp, &pp, &cfg, &p).unwrap();
        for (slot, &src) in perm.iter().enumerate() {
            for k in 0..4 {
                assert!((yp[[slot, k]] - y[[src, k]]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn positions_matter() {
        let cfg = small_cfg(100.0);
        let mut p = ToyParams::init(&cfg).unwrap();
        randomize_all(&mut p, 21, 0.4);
        let x = random_tokens(22, 16, 4);
        let y = forward_tokens(&x, &grid_positions(4, 4), &cfg, &p).unwrap();
        let shuffled: Vec<_> = grid_positions(4, 4).into_iter().rev().collect();
        let z = forward_tokens(&x, &shuffled, &cfg, &p).unwrap();
        assert!(y.iter().zip(z.iter()).any(|(a, b)| (a - b).abs() > 1e-6));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let cfg = small_cfg(10.0);
        let mut p = ToyParams::init(&cfg).unwrap();
        randomize_all(&mut p, 31, 0.5);
        let x = random_tokens(32, 16, 4);
        let pos = grid_positions(4, 4);
        let dout = random_tokens(33, 16, 4);
        let objective = |q: &ToyParams| -> f64 {
            let y = forward_tokens(&x, &pos, &cfg, q).unwrap();
            (&y * &dout).sum()
        };
        let (_, cache) = forward_with_cache(&x, &pos, &cfg, &p).unwrap();
        let grad = backward(&cache, &cfg, &p, &dout);
        let analytic: Vec<Vec<f64>> = grad.to_tensors().into_iter().map(|t| t.data).collect();
        let mut rng = rng_stream(Seed(34));
        let h = 1e-5;
        for (ti, g) in analytic.iter().enumerate() {
            for _ in 0..4 {
                let idx = rng.index(g.len());
                let mut plus = p.clone();
                plus.slices_mut()[ti][idx] += h;
                let mut minus = p.clone();
                minus.slices_mut()[ti][idx] -= h;
                let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
                let err = (fd - g[idx]).abs();
                assert!(err <= 1e-6 + 1e-5 * fd.abs().max(g[idx].abs()), "tensor {ti} idx {idx}: fd {fd} analytic {}", g[idx]);
            }
        }
    }

    #[test]
    fn tensor_round_trip_checks_shapes() {
        let cfg = small_cfg(100.0);
        let p = ToyParams::init(&cfg).unwrap();
        let t = p.to_tensors();
        assert_eq!(ToyParams::from_tensors(&cfg, &t).unwrap(), p);
        let mut bad = t.clone();
        bad[0].shape = vec![1, 1];
        assert!(ToyParams::from_tensors(&cfg, &bad).is_err());
        assert!(ToyParams::from_tensors(&ToyModelConfig::default(), &t).is_err());
    }

    #[test]
    fn sgd_step_moves_against_gradient() {
        let cfg = small_cfg(100.0);
        let p0 = ToyParams::init(&cfg).unwrap();
        let mut g = ToyParams::zeros(&cfg);
        g.b_out[1] = 2.0;
        let mut p = p0.clone();
        p.sgd_step(&g, 0.5);
        assert_eq!(p.b_out[1], p0.b_out[1] - 1.0);
        assert_eq!(p.w_in, p0.w_in);
    }
}
