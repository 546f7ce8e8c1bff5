//! Degradation, the training loop, checkpoints and one-step inference.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{load_image, Image};
use crate::latent::{decode_surrogate, encode_surrogate, pack, unpack, TokenGrid};
use crate::periodicity::{l_ap_against, l_ap_with_gradient_against, AutocorrProfile};
use crate::rng::rng_stream;

use super::config::ToyModelConfig;
use super::flow::anchor_lr;
use super::model::{
    backward, forward_with_cache, grid_positions, matrix_to_tokens, tokens_to_matrix, Denoiser, Tensor,
    ToyDenoiser, ToyParams,
};

pub const CHECKPOINT_FORMAT: &str = "gridwave-toy-denoiser";
pub const CHECKPOINT_VERSION: u32 = 1;
const SAMPLE_STREAM: u64 = 0x5a3e;

/// 3×3 box blur with replicated borders.
pub fn box_blur3(img: &Image) -> Image {
    let (h, w, c) = img.shape();
    let clampi = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    Image::from_fn(h, w, c, |r, col, k| {
        let mut s = 0.0;
        for dr in -1..=1isize {
            for dc in -1..=1isize {
                s += img.get(clampi(r as isize + dr, h), clampi(col as isize + dc, w), k);
            }
        }
        s / 9.0
    })
    .expect("blur of a valid image is valid")
}

/// Keeps the top-left sample of every `s×s` block.
pub fn decimate(img: &Image, s: usize) -> Result<Image> {
    let (h, w, c) = img.shape();
    if s == 0 || h % s != 0 || w % s != 0 {
        return Err(Error::NotDivisible { what: "image extent", value: h.min(w), by: s });
    }
    Image::from_fn(h / s, w / s, c, |r, col, k| img.get(r * s, col * s, k))
}

pub fn upsample_nearest(img: &Image, s: usize) -> Result<Image> {
    if s == 0 {
        return Err(Error::InvalidArgument("upsampling factor must be >= 1".into()));
    }
    let (h, w, c) = img.shape();
    Image::from_fn(h * s, w * s, c, |r, col, k| img.get(r / s, col / s, k))
}

/// The fixed degradation: 3×3 box blur, decimation by `scale`. Returns the
/// small LR image.
pub fn degrade(hr: &Image, scale: usize) -> Result<Image> {
    decimate(&box_blur3(hr), scale)
}

/// Image → surrogate latent → packed tokens.
pub fn encode_packed(img: &Image, cfg: &ToyModelConfig) -> Result<TokenGrid> {
    pack(&encode_surrogate(img, cfg.surrogate_factor)?, cfg.pack_factor)
}

/// Packed tokens → surrogate latent → image, without clamping.
pub fn decode_packed(g: &TokenGrid, cfg: &ToyModelConfig) -> Result<Image> {
    decode_surrogate(&unpack(g, cfg.pack_factor)?, cfg.surrogate_factor)
}

fn check_hr(img: &Image, cfg: &ToyModelConfig) -> Result<()> {
    if img.channels() != cfg.channels {
        return Err(Error::ShapeMismatch(format!(
            "image has {} channels, config expects {}",
            img.channels(),
            cfg.channels
        )));
    }
    let unit = cfg.token_period() * cfg.scale;
    for (what, v) in [("image height", img.height()), ("image width", img.width())] {
        if v % unit != 0 {
            return Err(Error::NotDivisible { what, value: v, by: unit });
        }
    }
    Ok(())
}

/// One training pair in token space plus the frozen autocorrelation targets
/// of the HR image.
#[derive(Debug, Clone)]
pub struct Sample {
    pub hr: Image,
    pub z_lr: TokenGrid,
    pub z_hr: TokenGrid,
    pub target: AutocorrProfile,
}

impl Sample {
    pub fn new(hr: &Image, cfg: &ToyModelConfig) -> Result<Self> {
        check_hr(hr, cfg)?;
        let lr_up = upsample_nearest(&degrade(hr, cfg.scale)?, cfg.scale)?;
        Ok(Self {
            hr: hr.clone(),
            z_lr: encode_packed(&lr_up, cfg)?,
            z_hr: encode_packed(hr, cfg)?,
            target: AutocorrProfile::compute(hr, &cfg.lag_spec()?)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLoss {
    pub mse: f64,
    pub l_ap: f64,
    pub total: f64,
}

pub fn mse(a: &TokenGrid, b: &TokenGrid) -> f64 {
    let n = a.data().len() as f64;
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n
}

/// Loss of one sample and its parameter gradient.
///
/// `total = MSE(pred, z_hr) + λ·L_AP(decode(pred), hr)`. The periodicity term
/// is differentiated with respect to the prediction only; the HR side enters
/// as fixed target values.
pub fn loss_and_gradient(params: &ToyParams, cfg: &ToyModelConfig, sample: &Sample) -> Result<(StepLoss, ToyParams)> {
    let state = anchor_lr(&sample.z_lr, cfg)?;
    let (h, w) = (state.input.h(), state.input.w());
    let (out, cache) = forward_with_cache(&tokens_to_matrix(&state.input), &grid_positions(h, w), cfg, params)?;
    let pred = matrix_to_tokens(out.clone(), h, w)?;
    let n = pred.data().len() as f64;
    let target = tokens_to_matrix(&sample.z_hr);
    let mut dout: Array2<f64> = (&out - &target) * (2.0 / n);
    let mse = mse(&pred, &sample.z_hr);
    let img = decode_packed(&pred, cfg)?;
    let l_ap = if cfg.lambda_ap > 0.0 {
        let (value, grad_img) = l_ap_with_gradient_against(&img, &sample.target)?;
        // decode and unpack are permutations, so their adjoint is the forward map
        let grad_tokens = tokens_to_matrix(&encode_packed(&grad_img, cfg)?);
        dout.scaled_add(cfg.lambda_ap, &grad_tokens);
        value
    } else {
        l_ap_against(&img, &sample.target)?
    };
    let total = mse + cfg.lambda_ap * l_ap;
    Ok((StepLoss { mse, l_ap, total }, backward(&cache, cfg, params, &dout)))
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iteration: usize,
    pub mse: f64,
    pub l_ap: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ToyParams,
    /// Losses before the update of each iteration.
    pub log: Vec<LogRow>,
    /// Mean token MSE over the whole training corpus before and after training.
    pub corpus_mse_initial: f64,
    pub corpus_mse_final: f64,
}

/// Mean MSE of the model prediction over `samples`.
pub fn corpus_mse(params: &ToyParams, cfg: &ToyModelConfig, samples: &[Sample]) -> Result<f64> {
    let den = ToyDenoiser { cfg, params };
    let mut total = 0.0;
    for s in samples {
        total += mse(&den.denoise(&anchor_lr(&s.z_lr, cfg)?)?, &s.z_hr);
    }
    Ok(total / samples.len() as f64)
}

/// The sample index drawn at every iteration.
pub fn sample_schedule(cfg: &ToyModelConfig, corpus_len: usize, iterations: usize) -> Vec<usize> {
    let mut rng = rng_stream(cfg.seed.derive(SAMPLE_STREAM));
    (0..iterations).map(|_| rng.index(corpus_len)).collect()
}

/// Plain SGD at `cfg.learning_rate`, one uniformly drawn image per iteration.
pub fn train_on_images(cfg: &ToyModelConfig, images: &[Image], iterations: usize) -> Result<TrainOutcome> {
    cfg.validate()?;
    if images.is_empty() {
        return Err(Error::InvalidArgument("training corpus is empty".into()));
    }
    if iterations == 0 {
        return Err(Error::InvalidArgument("iterations must be >= 1".into()));
    }
    let samples = images.iter().map(|img| Sample::new(img, cfg)).collect::<Result<Vec<_>>>()?;
    let mut params = ToyParams::init(cfg)?;
    let corpus_mse_initial = corpus_mse(&params, cfg, &samples)?;
    let mut log = Vec::with_capacity(iterations);
    for (iteration, idx) in sample_schedule(cfg, samples.len(), iterations).into_iter().enumerate() {
        let (loss, grad) = loss_and_gradient(&params, cfg, &samples[idx])?;
        if !loss.total.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        log.push(LogRow { iteration, mse: loss.mse, l_ap: loss.l_ap, total: loss.total });
        params.sgd_step(&grad, cfg.learning_rate);
    }
    let corpus_mse_final = corpus_mse(&params, cfg, &samples)?;
    Ok(TrainOutcome { params, log, corpus_mse_initial, corpus_mse_final })
}

/// PNG files of a directory, sorted by file name.
pub fn list_pngs(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let entries = std::fs::read_dir(dir).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile { path: dir.to_path_buf() }
        } else {
            Error::Read { path: dir.to_path_buf(), source }
        }
    })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    paths.sort();
    Ok(paths)
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Vec<Image>> {
    list_pngs(dir)?.iter().map(load_image).collect()
}

/// Trains on every PNG in `dataset`.
pub fn train_toy(cfg: &ToyModelConfig, dataset: impl AsRef<Path>, iterations: usize) -> Result<(Checkpoint, Vec<LogRow>)> {
    let images = load_dataset(dataset)?;
    let outcome = train_on_images(cfg, &images, iterations)?;
    Ok((Checkpoint::new(cfg, &outcome.params, iterations), outcome.log))
}

pub fn log_to_csv(log: &[LogRow]) -> String {
    let mut out = String::from("iteration,mse,l_ap,total\n");
    for r in log {
        out.push_str(&format!("{},{:e},{:e},{:e}\n", r.iteration, r.mse, r.l_ap, r.total));
    }
    out
}

/// Trained model as a versioned JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub format_version: u32,
    pub crate_version: String,
    pub iterations: usize,
    pub config: ToyModelConfig,
    pub tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn new(cfg: &ToyModelConfig, params: &ToyParams, iterations: usize) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            format_version: CHECKPOINT_VERSION,
            crate_version: crate::VERSION.into(),
            iterations,
            config: cfg.clone(),
            tensors: params.to_tensors(),
        }
    }

    pub fn params(&self) -> Result<ToyParams> {
        self.config.validate()?;
        ToyParams::from_tensors(&self.config, &self.tensors)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Self = serde_json::from_str(text).map_err(|e| Error::Format {
            what: "checkpoint",
            detail: e.to_string(),
        })?;
        if ck.format != CHECKPOINT_FORMAT || ck.format_version != CHECKPOINT_VERSION {
            return Err(Error::Format {
                what: "checkpoint",
                detail: format!(
                    "unsupported header {} v{} (expected {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION})",
                    ck.format, ck.format_version
                ),
            });
        }
        ck.params()?;
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| {
            if source.kind() == std::io::ErrorKind::NotFound {
                Error::MissingFile { path: path.to_path_buf() }
            } else {
                Error::Read { path: path.to_path_buf(), source }
            }
        })?;
        Self::from_json(&text)
    }
}

/// Upsample → encode → pack → anchor → one denoiser call → unpack → decode →
/// clamp. The output is `scale` times larger than `lr`.
pub fn one_step_infer_with(den: &dyn Denoiser, cfg: &ToyModelConfig, lr: &Image) -> Result<Image> {
    let up = upsample_nearest(lr, cfg.scale)?;
    check_hr(&up, cfg).map_err(|e| Error::ShapeMismatch(format!("LR image incompatible with the model: {e}")))?;
    let state = anchor_lr(&encode_packed(&up, cfg)?, cfg)?;
    Ok(decode_packed(&den.denoise(&state)?, cfg)?.clamped())
}

pub fn one_step_infer(checkpoint: &Checkpoint, lr: &Image) -> Result<Image> {
    let params = checkpoint.params()?;
    one_step_infer_with(&ToyDenoiser { cfg: &checkpoint.config, params: &params }, &checkpoint.config, lr)
}
