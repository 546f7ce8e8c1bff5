//! First-stage dataset curation: texture scores, absolute cuts and
//! top-fraction ranking over a small synthetic pool.
//!
//!     cargo run --release --example curation

use gridwave::curation::{curate, score_image, CurationConfig};
use gridwave::synth::{diagonal_gradient, smoothed_noise, texture};
use gridwave::Seed;

fn main() -> gridwave::Result<()> {
    let pool = [("flat_gradient.png", diagonal_gradient(64, 3, 0.4, 0.6)?),
        ("blurry_noise.png", smoothed_noise(Seed(1), 64, 3, 6.0, 0.05)?),
        ("fine_noise.png", smoothed_noise(Seed(2), 64, 3, 0.8, 0.2)?),
        ("texture_a.png", texture(Seed(3), 64)?),
        ("texture_b.png", texture(Seed(4), 64)?),
        ("texture_c.png", texture(Seed(5), 64)?)];
    let cfg = CurationConfig { min_laplacian_var: 1e-5, ..Default::default() };
    let scores = pool
        .iter()
        .map(|(name, img)| score_image(name, img, &cfg))
        .collect::<gridwave::Result<Vec<_>>>()?;
    let outcome = curate(scores, &cfg, None)?;
    println!("{:<18} {:>11} {:>9} {:>9} {:>8} {:>8} {:>6}", "image", "laplacian", "sobel", "contrast", "corr", "entropy", "rank");
    for s in &outcome.scores {
        println!(
            "{:<18} {:>11.3e} {:>9.4} {:>9.3} {:>8.3} {:>8.3} {:>6.3}",
            s.path.display(),
            s.laplacian_var,
            s.sobel_mean,
            s.glcm_contrast,
            s.glcm_correlation,
            s.entropy_bits,
            s.aggregate
        );
    }
    println!("kept: {:?}", outcome.kept);
    for r in &outcome.rejected {
        println!("rejected {} ({:?})", r.path.display(), r.reason);
    }
    Ok(())
}
