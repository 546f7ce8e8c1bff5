//! Token packing, the lossless surrogate autoencoder, and how a grid of
//! identical tokens decodes into a periodic tile.
//!
//!     cargo run --release --example pack_geometry -- [tile.png]

use gridwave::diagnostics::{grid_spike_score, periodicity_score_spatial};
use gridwave::image::save_image;
use gridwave::latent::{composed_unpack_order, decode_surrogate, encode_surrogate, pack, periodic_tile_demo, unpack};
use gridwave::rng::rng_stream;
use gridwave::synth::texture;
use gridwave::{PackFactor, Seed};

fn main() -> gridwave::Result<()> {
    let (vae, patch) = (PackFactor::new(4)?, PackFactor::new(2)?);
    let img = texture(Seed(3), 64)?;
    let latent = encode_surrogate(&img, vae)?;
    let tokens = pack(&latent, patch)?;
    println!("image {:?} -> latent {:?} -> tokens {:?}", img.shape(), latent.shape(), tokens.shape());
    assert_eq!(decode_surrogate(&unpack(&tokens, patch)?, vae)?, img);
    println!("decode(unpack(pack(encode(x)))) == x");

    // Unpack at 2 then decode at 4 equals one depth-to-space at 8 after a
    // fixed channel permutation.
    let order = composed_unpack_order(tokens.c(), 2, 4)?;
    let direct = decode_surrogate(&tokens.permute_channels(&order)?, PackFactor::new(8)?)?;
    assert_eq!(direct, img);
    println!("composed stride-8 order matches the two-stage unpack");

    let mut rng = rng_stream(Seed(42));
    let token: Vec<f64> = (0..3 * 32 * 32).map(|_| rng.uniform()).collect();
    let tile = periodic_tile_demo(&token, 8, 8, PackFactor::new(32)?)?;
    for period in [32, 7] {
        let s = grid_spike_score(&tile, period, 10.0)?;
        let a = periodicity_score_spatial(&tile, period, 0.5)?;
        println!(
            "tile at period {period:>2}: spectral score {:>10.3e} flagged {}, spatial aggregate {:+.3} flagged {}",
            s.score, s.flagged, a.aggregate, a.flagged
        );
    }
    if let Some(path) = std::env::args().nth(1) {
        save_image(&tile, path)?;
    }
    Ok(())
}
