//! One-step latent super-resolution at desk scale: flow anchoring, a small
//! rope transformer denoiser, its training loop and the four-arm ablation.

pub mod ablation;
pub mod config;
pub mod flow;
pub mod model;
pub mod train;

pub use ablation::{run_ablation, AblationReport, Arm, ArmReport};
pub use config::ToyModelConfig;
pub use flow::{anchor_lr, interpolate_flow, FlowState};
pub use model::{toy_denoiser_forward, Denoiser, ToyDenoiser, ToyParams};
pub use train::{one_step_infer, one_step_infer_with, train_on_images, train_toy, Checkpoint, LogRow, TrainOutcome};
