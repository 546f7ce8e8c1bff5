//! Four-arm study of base-frequency rescaling and the periodicity loss.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{grid_spike_score, periodicity_score_spatial, DEFAULT_SPATIAL_THRESHOLD, DEFAULT_SPIKE_THRESHOLD};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::metrics::psnr_y;
use crate::rng::Seed;

use super::config::ToyModelConfig;
use super::model::{ToyDenoiser, ToyParams};
use super::train::{degrade, one_step_infer_with, train_on_images};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
/// Loss weight used by the periodicity-loss arms when the base config has none.
pub const DEFAULT_LAMBDA_AP: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Base,
    Rfr,
    Ap,
    Both,
}

impl Arm {
    pub const ALL: [Arm; 4] = [Arm::Base, Arm::Rfr, Arm::Ap, Arm::Both];

    pub fn uses_rfr(self) -> bool {
        matches!(self, Arm::Rfr | Arm::Both)
    }

    pub fn uses_ap(self) -> bool {
        matches!(self, Arm::Ap | Arm::Both)
    }

    /// The arm's config: only `use_rfr` and `lambda_ap` differ from `base`.
    pub fn config(self, base: &ToyModelConfig) -> ToyModelConfig {
        let lambda = if base.lambda_ap > 0.0 { base.lambda_ap } else { DEFAULT_LAMBDA_AP };
        ToyModelConfig {
            use_rfr: self.uses_rfr(),
            lambda_ap: if self.uses_ap() { lambda } else { 0.0 },
            ..base.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmReport {
    pub arm: Arm,
    pub theta: f64,
    pub lambda_ap: f64,
    /// Total loss at the last iteration.
    pub final_train_loss: f64,
    /// Mean training-corpus MSE before and after training.
    pub corpus_mse_initial: f64,
    pub corpus_mse_final: f64,
    pub mean_psnr_y: f64,
    pub mean_periodicity: f64,
    pub median_periodicity: f64,
    /// Fraction of eval outputs flagged by the spectral detector.
    pub spike_flag_rate: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub schema_version: u32,
    pub crate_version: String,
    pub seed: Seed,
    pub iterations: usize,
    pub train_images: usize,
    pub eval_images: usize,
    /// Pixel period at which outputs are scored.
    pub period: usize,
    pub base_config: ToyModelConfig,
    pub arms: Vec<ArmReport>,
}

impl AblationReport {
    pub fn arm(&self, arm: Arm) -> &ArmReport {
        self.arms.iter().find(|a| a.arm == arm).expect("all arms are present")
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn evaluate(cfg: &ToyModelConfig, params: &ToyParams, eval: &[Image]) -> Result<(f64, f64, f64, f64)> {
    let den = ToyDenoiser { cfg, params };
    let period = cfg.token_period();
    let (mut psnr, mut aggregates, mut flags) = (0.0, Vec::with_capacity(eval.len()), 0usize);
    for hr in eval {
        let sr = one_step_infer_with(&den, cfg, &degrade(hr, cfg.scale)?)?;
        psnr += psnr_y(&sr, hr)?;
        aggregates.push(periodicity_score_spatial(&sr, period, DEFAULT_SPATIAL_THRESHOLD)?.aggregate);
        flags += grid_spike_score(&sr, period, DEFAULT_SPIKE_THRESHOLD)?.flagged as usize;
    }
    let n = eval.len() as f64;
    let mean_agg = aggregates.iter().sum::<f64>() / n;
    Ok((psnr / n, mean_agg, median(aggregates), flags as f64 / n))
}

fn run_arm(arm: Arm, base: &ToyModelConfig, train: &[Image], iterations: usize, eval: &[Image]) -> Result<ArmReport> {
    let start = std::time::Instant::now();
    let cfg = arm.config(base);
    let outcome = train_on_images(&cfg, train, iterations)?;
    let (mean_psnr_y, mean_periodicity, median_periodicity, spike_flag_rate) = evaluate(&cfg, &outcome.params, eval)?;
    log::info!("arm {arm:?} done in {:.1}s", start.elapsed().as_secs_f64());
    Ok(ArmReport {
        arm,
        theta: cfg.theta(),
        lambda_ap: cfg.lambda_ap,
        final_train_loss: outcome.log.last().map_or(f64::NAN, |r| r.total),
        corpus_mse_initial: outcome.corpus_mse_initial,
        corpus_mse_final: outcome.corpus_mse_final,
        mean_psnr_y,
        mean_periodicity,
        median_periodicity,
        spike_flag_rate,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Trains the four arms from the same seed (in parallel) and scores each on
/// the held-out `eval` images at the token period.
pub fn run_ablation(base: &ToyModelConfig, train: &[Image], iterations: usize, eval: &[Image]) -> Result<AblationReport> {
    base.validate()?;
    if eval.is_empty() {
        return Err(Error::InvalidArgument("eval set is empty".into()));
    }
    if eval.iter().any(|e| train.iter().any(|t| t == e)) {
        return Err(Error::InvalidArgument("eval set overlaps the training corpus".into()));
    }
    let arms = Arm::ALL
        .par_iter()
        .map(|&arm| run_arm(arm, base, train, iterations, eval))
        .collect::<Result<Vec<_>>>()?;
    let report = AblationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        crate_version: crate::VERSION.into(),
        seed: base.seed,
        iterations,
        train_images: train.len(),
        eval_images: eval.len(),
        period: base.token_period(),
        base_config: base.clone(),
        arms,
    };
    let finite = report.arms.iter().all(|a| {
        [a.final_train_loss, a.corpus_mse_initial, a.corpus_mse_final, a.mean_psnr_y, a.mean_periodicity, a.median_periodicity]
            .iter()
            .all(|v| v.is_finite())
    });
    if !finite {
        return Err(Error::NonFinite("ablation metrics"));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::texture_corpus;

    #[test]
    fn arm_definitions() {
        let base = ToyModelConfig::default();
        let b = Arm::Base.config(&base);
        assert_eq!((b.theta(), b.lambda_ap), (10_000.0, 0.0));
        let both = Arm::Both.config(&base);
        assert_eq!(both.theta(), 100.0);
        assert!(both.lambda_ap > 0.0);
        assert_eq!(Arm::Rfr.config(&base).lambda_ap, 0.0);
        assert_eq!(Arm::Ap.config(&base).theta(), 10_000.0);
    }

    #[test]
    fn arms_share_initial_parameters() {
        let base = ToyModelConfig::default();
        let p: Vec<ToyParams> = Arm::ALL.iter().map(|a| ToyParams::init(&a.config(&base)).unwrap()).collect();
        assert!(p.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn short_run_produces_complete_report() {
        let base = ToyModelConfig { layers: 1, ..Default::default() };
        let train = texture_corpus(Seed(1), 2, 64).unwrap();
        let eval = texture_corpus(Seed(2), 2, 64).unwrap();
        let r = run_ablation(&base, &train, 3, &eval).unwrap();
        assert_eq!(r.arms.len(), 4);
        assert_eq!(r.period, 8);
        assert!(run_ablation(&base, &train, 3, &train[..1]).is_err());
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<AblationReport>(&json).unwrap(), r);
    }
}
