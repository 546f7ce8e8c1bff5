//! Luma PSNR and SSIM, whole-image and patchwise, for a few degradations.
//!
//!     cargo run --release --example metrics

use gridwave::metrics::{patch_eval, psnr_y, ssim_y};
use gridwave::sr::train::{box_blur3, degrade, upsample_nearest};
use gridwave::synth::{inject_grid, texture};
use gridwave::Seed;

fn main() -> gridwave::Result<()> {
    let hr = texture(Seed(7), 128)?;
    let cases = [
        ("identical", hr.clone()),
        ("box blur", box_blur3(&hr)),
        ("x2 nearest", upsample_nearest(&degrade(&hr, 2)?, 2)?),
        ("grid 0.05", inject_grid(&hr, Seed(8), 16, 0.05)?),
    ];
    println!("{:<11} {:>9} {:>8} {:>14} {:>10}", "case", "psnr-y", "ssim-y", "psnr 32px mean", "patches");
    for (name, img) in &cases {
        let patches = patch_eval(img, &hr, 32)?;
        println!(
            "{name:<11} {:>9.3} {:>8.4} {:>14.3} {:>10}",
            psnr_y(img, &hr)?,
            ssim_y(img, &hr)?,
            patches.psnr_db,
            patches.per_patch.len()
        );
    }
    Ok(())
}
