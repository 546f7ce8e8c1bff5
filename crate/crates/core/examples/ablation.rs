//! Four-arm ablation of base-frequency rescaling and the periodicity loss on
//! synthetic textures, scored at the token period.
//!
//!     cargo run --release --example ablation -- [iterations]

use gridwave::sr::{run_ablation, ToyModelConfig};
use gridwave::synth::texture_corpus;
use gridwave::Seed;

fn main() -> gridwave::Result<()> {
    let iterations = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let train = texture_corpus(Seed(1), 32, 64)?;
    let eval = texture_corpus(Seed(2), 16, 64)?;
    let report = run_ablation(&ToyModelConfig::default(), &train, iterations, &eval)?;
    println!(
        "{:<5} {:>7} {:>6} {:>11} {:>11} {:>8} {:>9} {:>6}",
        "arm", "theta", "lambda", "mse before", "mse after", "psnr-y", "period-8", "flags"
    );
    for a in &report.arms {
        println!(
            "{:<5} {:>7} {:>6} {:>11.5e} {:>11.5e} {:>8.3} {:>9.5} {:>6.2}",
            format!("{:?}", a.arm).to_lowercase(),
            a.theta,
            a.lambda_ap,
            a.corpus_mse_initial,
            a.corpus_mse_final,
            a.mean_psnr_y,
            a.median_periodicity,
            a.spike_flag_rate
        );
    }
    Ok(())
}
