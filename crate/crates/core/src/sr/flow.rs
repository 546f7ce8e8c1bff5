//! Straight-path flow interpolation and mid-timestep anchoring.

use crate::error::{Error, Result};
use crate::latent::TokenGrid;

use super::config::ToyModelConfig;

fn check_t(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::OutOfRange(format!("flow time {t} is outside [0, 1]")));
    }
    Ok(())
}

/// `t·z_hr + (1 − t)·eps`, elementwise. Exact at both endpoints.
pub fn interpolate_flow(z_hr: &TokenGrid, eps: &TokenGrid, t: f64) -> Result<TokenGrid> {
    if z_hr.shape() != eps.shape() {
        return Err(Error::ShapeMismatch(format!(
            "flow endpoints {:?} vs {:?}",
            z_hr.shape(),
            eps.shape()
        )));
    }
    check_t(t)?;
    let (h, w, c) = z_hr.shape();
    let data = if t == 1.0 {
        z_hr.data().to_vec()
    } else if t == 0.0 {
        eps.data().to_vec()
    } else {
        z_hr.data().iter().zip(eps.data()).map(|(a, b)| t * a + (1.0 - t) * b).collect()
    };
    TokenGrid::new(h, w, c, data)
}

/// A point on the flow together with whatever endpoints are known.
///
/// At inference only the anchored LR latent exists; training states may also
/// carry the clean target and the noise draw.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub t: f64,
    /// What the denoiser sees at time `t`.
    pub input: TokenGrid,
    pub z_lr: TokenGrid,
    pub z_hr: Option<TokenGrid>,
    pub eps: Option<TokenGrid>,
}

impl FlowState {
    pub fn validate(&self) -> Result<()> {
        check_t(self.t)?;
        let shape = self.input.shape();
        let others = [Some(&self.z_lr), self.z_hr.as_ref(), self.eps.as_ref()];
        if others.into_iter().flatten().any(|g| g.shape() != shape) {
            return Err(Error::ShapeMismatch("flow state grids differ in shape".into()));
        }
        Ok(())
    }

    /// Attaches the clean target (training only).
    pub fn with_target(mut self, z_hr: TokenGrid) -> Result<Self> {
        self.z_hr = Some(z_hr);
        self.validate()?;
        Ok(self)
    }
}

/// Places the LR latent on the flow at `cfg.t_mid`, injected as-is with no
/// added noise.
pub fn anchor_lr(z_lr: &TokenGrid, cfg: &ToyModelConfig) -> Result<FlowState> {
    check_t(cfg.t_mid)?;
    if cfg.t_mid == 1.0 {
        log::warn!("t_mid = 1 anchors the LR latent at the data end; the pass is a degenerate pass-through");
    }
    Ok(FlowState {
        t: cfg.t_mid,
        input: z_lr.clone(),
        z_lr: z_lr.clone(),
        z_hr: None,
        eps: None,
    })
}
