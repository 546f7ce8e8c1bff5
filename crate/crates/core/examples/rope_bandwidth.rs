//! Phase deltas of adjacent tokens, the strong-rotation bandwidth, and the
//! high-similarity zone around a query at two base frequencies.
//!
//!     cargo run --release --example rope_bandwidth -- [out_dir]

use std::path::PathBuf;

use gridwave::image::save_image;
use gridwave::rope::{adjacent_similarity_map, count_above, phase_deltas, strong_bandwidth, RopeConfig};
use gridwave::Seed;

fn main() -> gridwave::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from);
    for theta in [10_000.0, 100.0] {
        let cfg = RopeConfig::new(56, theta, 128, 128)?;
        let deltas: Vec<String> = phase_deltas(&cfg).iter().take(16).map(|d| format!("{:.1}", d.to_degrees())).collect();
        println!("θ = {theta}");
        println!("  first phase deltas (deg): {}", deltas.join(" "));
        println!("  strong dims (> 5°): {}/{}", strong_bandwidth(&cfg, 5.0)?, cfg.pairs());
        let map = adjacent_similarity_map(&cfg, 256, Seed(42))?;
        let zones: Vec<String> = [0.99, 0.95, 0.9, 0.8]
            .iter()
            .map(|&level| format!("cos>{level}: {}", count_above(&map, level)))
            .collect();
        println!("  zone cells  {}", zones.join("  "));
        if let Some(dir) = &out {
            std::fs::create_dir_all(dir).map_err(|source| gridwave::Error::Write { path: dir.clone(), source })?;
            let stem = dir.join(format!("similarity_theta{theta}"));
            std::fs::write(stem.with_extension("csv"), map.to_csv())
                .map_err(|source| gridwave::Error::Write { path: stem.with_extension("csv"), source })?;
            save_image(&map.to_normalized_image(), stem.with_extension("png"))?;
        }
    }
    Ok(())
}
