//! Trains the toy one-step denoiser on synthetic textures, round-trips the
//! checkpoint through JSON and super-resolves a held-out image in one
//! forward pass.
//!
//!     cargo run --release --example train_and_infer -- [iterations]

use gridwave::metrics::psnr_y;
use gridwave::sr::train::{degrade, upsample_nearest};
use gridwave::sr::{one_step_infer, train_on_images, Checkpoint, ToyModelConfig};
use gridwave::synth::texture_corpus;
use gridwave::Seed;

fn main() -> gridwave::Result<()> {
    let iterations = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let cfg = ToyModelConfig { use_rfr: true, ..Default::default() };
    let train = texture_corpus(Seed(1), 16, 64)?;
    let outcome = train_on_images(&cfg, &train, iterations)?;
    for row in outcome.log.iter().step_by((iterations / 5).max(1)) {
        println!("iter {:>5}  mse {:.4e}  l_ap {:.4e}  total {:.4e}", row.iteration, row.mse, row.l_ap, row.total);
    }
    println!("corpus mse {:.5e} -> {:.5e}", outcome.corpus_mse_initial, outcome.corpus_mse_final);

    let checkpoint = Checkpoint::from_json(&Checkpoint::new(&cfg, &outcome.params, iterations).to_json())?;
    let hr = &texture_corpus(Seed(2), 1, 64)?[0];
    let lr = degrade(hr, cfg.scale)?;
    let sr = one_step_infer(&checkpoint, &lr)?;
    println!(
        "held-out {:?} -> {:?}: psnr-y nearest {:.3} dB, one-step {:.3} dB",
        lr.shape(),
        sr.shape(),
        psnr_y(&upsample_nearest(&lr, cfg.scale)?, hr)?,
        psnr_y(&sr, hr)?
    );
    Ok(())
}
