//! Spectral and spatial grid detectors on clean images and on the same
//! images with an injected period-32 pattern.
//!
//!     cargo run --release --example artifact_scan

use gridwave::diagnostics::{detect_fundamental_period, grid_spike_score, periodicity_score_spatial};
use gridwave::synth::{clean_scene, inject_grid};
use gridwave::Seed;

fn main() -> gridwave::Result<()> {
    println!("{:<6} {:>10} {:>8} {:>10} {:>8} {:>10}", "image", "spectral", "flag", "spatial", "flag", "period");
    for s in 0..6u64 {
        let clean = clean_scene(Seed(100 + s), 256)?;
        let dirty = inject_grid(&clean, Seed(200 + s), 32, 0.1)?;
        for (name, img) in [("clean", &clean), ("grid", &dirty)] {
            let spec = grid_spike_score(img, 32, 10.0)?;
            let spat = periodicity_score_spatial(img, 32, 0.5)?;
            let period = detect_fundamental_period(img, &[8, 16, 24, 32, 48], 10.0)?;
            println!(
                "{name:<6} {:>10.2} {:>8} {:>10.3} {:>8} {:>10}",
                spec.score,
                spec.flagged,
                spat.aggregate,
                spat.flagged,
                period.map_or("-".into(), |p| p.to_string())
            );
        }
    }
    Ok(())
}
