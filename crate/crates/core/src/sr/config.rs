//! Configuration of the toy one-step denoiser and its training run.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::PackFactor;
use crate::periodicity::LagSpec;
use crate::rng::Seed;
use crate::rope::RopeConfig;

/// Base frequency used when rescaling is switched on.
pub const RFR_THETA: f64 = 100.0;
/// Standard base frequency.
pub const STANDARD_THETA: f64 = 10_000.0;

/// Model, pipeline and optimizer settings. Loaded from TOML; every field has
/// a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyModelConfig {
    /// Hidden width of the transformer.
    pub token_dim: usize,
    pub heads: usize,
    pub layers: usize,
    /// Hidden width of each feedforward.
    pub ffn_hidden: usize,
    /// Per-axis rope dimension and base frequency; `2·rope.d` must equal the
    /// per-head width. The grid extent is informational.
    pub rope: RopeConfig,
    /// Replaces `rope.theta` by [`RFR_THETA`].
    pub use_rfr: bool,
    /// Stride of the space-to-depth surrogate autoencoder.
    pub surrogate_factor: PackFactor,
    pub pack_factor: PackFactor,
    /// Super-resolution scale of the degradation.
    pub scale: usize,
    /// Image channels (3 for RGB).
    pub channels: usize,
    pub t_mid: f64,
    pub lambda_ap: f64,
    /// Pixel lags of the periodicity loss.
    pub lags: Vec<usize>,
    pub learning_rate: f64,
    pub seed: Seed,
}

impl Default for ToyModelConfig {
    fn default() -> Self {
        Self {
            token_dim: 64,
            heads: 2,
            layers: 4,
            ffn_hidden: 128,
            rope: RopeConfig {
                d: 16,
                theta: STANDARD_THETA,
                grid_h: 8,
                grid_w: 8,
            },
            use_rfr: false,
            surrogate_factor: PackFactor::new(4).expect("nonzero"),
            pack_factor: PackFactor::new(2).expect("nonzero"),
            scale: 2,
            channels: 3,
            t_mid: 0.3,
            lambda_ap: 0.1,
            lags: vec![2, 4, 6, 8, 10],
            learning_rate: 1e-3,
            seed: Seed(42),
        }
    }
}

impl ToyModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.token_dim == 0 || self.heads == 0 || self.layers == 0 || self.ffn_hidden == 0 {
            return bad("token_dim, heads, layers and ffn_hidden must be >= 1".into());
        }
        if !self.token_dim.is_multiple_of(self.heads) {
            return bad(format!("token_dim {} is not divisible by heads {}", self.token_dim, self.heads));
        }
        self.rope.validate()?;
        if self.head_dim() != self.rope.feature_len() {
            return bad(format!(
                "per-head width {} must equal 2·rope.d = {}",
                self.head_dim(),
                self.rope.feature_len()
            ));
        }
        if self.surrogate_factor.get() == 0 || self.pack_factor.get() == 0 || self.scale == 0 {
            return bad("surrogate_factor, pack_factor and scale must be >= 1".into());
        }
        if !matches!(self.channels, 1 | 3) {
            return bad(format!("channels must be 1 or 3, got {}", self.channels));
        }
        if !(0.0..=1.0).contains(&self.t_mid) {
            return Err(Error::OutOfRange(format!("t_mid {} is outside [0, 1]", self.t_mid)));
        }
        if !(self.lambda_ap >= 0.0) || !self.lambda_ap.is_finite() {
            return bad(format!("lambda_ap must be finite and >= 0, got {}", self.lambda_ap));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning_rate must be finite and > 0, got {}", self.learning_rate));
        }
        self.lag_spec()?;
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.token_dim / self.heads
    }

    pub fn theta(&self) -> f64 {
        if self.use_rfr {
            RFR_THETA
        } else {
            self.rope.theta
        }
    }

    /// The rope configuration actually used by attention.
    pub fn effective_rope(&self) -> RopeConfig {
        RopeConfig {
            theta: self.theta(),
            ..self.rope
        }
    }

    /// Channels of one packed token.
    pub fn token_channels(&self) -> usize {
        let f = self.surrogate_factor.get() * self.pack_factor.get();
        self.channels * f * f
    }

    /// Pixel period of the packed token grid.
    pub fn token_period(&self) -> usize {
        self.surrogate_factor.get() * self.pack_factor.get()
    }

    pub fn lag_spec(&self) -> Result<LagSpec> {
        LagSpec::new(self.lags.clone(), 4)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Format {
            what: "model config",
            detail: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
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
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_geometry() {
        let cfg = ToyModelConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.token_channels(), 192);
        assert_eq!(cfg.token_period(), 8);
        assert_eq!(cfg.head_dim(), 32);
        assert_eq!(cfg.theta(), 10_000.0);
        assert_eq!(ToyModelConfig { use_rfr: true, ..cfg }.theta(), 100.0);
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let cfg = ToyModelConfig { lambda_ap: 0.25, use_rfr: true, ..Default::default() };
        assert_eq!(ToyModelConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
        let partial = ToyModelConfig::from_toml_str("layers = 2\n[rope]\nd = 16\ntheta = 500.0\ngrid_h = 8\ngrid_w = 8\n").unwrap();
        assert_eq!(partial.layers, 2);
        assert_eq!(partial.rope.theta, 500.0);
        assert!(ToyModelConfig::from_toml_str("bogus = 1").is_err());
    }

    #[test]
    fn rejects_inconsistent_heads() {
        let cfg = ToyModelConfig { heads: 3, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = ToyModelConfig { heads: 4, ..Default::default() };
        assert!(cfg.validate().is_err()); // head width 16 ≠ 2·16
        let cfg = ToyModelConfig { heads: 4, rope: RopeConfig { d: 8, ..ToyModelConfig::default().rope }, ..Default::default() };
        cfg.validate().unwrap();
    }
}
