//! Diagnosis and suppression of periodic grid artifacts in one-step,
//! patch-free latent diffusion super-resolution.
//!
//! The crate covers two-axis rotary embeddings and their base-frequency
//! analysis ([`rope`]), token packing and a lossless surrogate autoencoder
//! ([`latent`]), the quadrant autocorrelation periodicity loss
//! ([`periodicity`]), spectral and spatial artifact detectors
//! ([`diagnostics`]), a desk-scale one-step denoiser with its training and
//! ablation harness ([`sr`]), corpus curation filters ([`curation`]) and
//! luma fidelity metrics ([`metrics`]). The `gridwave` binary exposes each
//! capability as a subcommand; see [`cli`].

pub mod cli;
pub mod curation;
pub mod diagnostics;
pub mod error;
pub mod image;
pub mod io;
pub mod latent;
pub mod metrics;
pub mod periodicity;
pub mod rng;
pub mod rope;
pub mod sr;
pub mod synth;

pub use error::{Error, Result};
pub use image::{Grid2D, Image};
pub use latent::{PackFactor, TokenGrid};
pub use rng::Seed;

/// Crate version recorded in every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
