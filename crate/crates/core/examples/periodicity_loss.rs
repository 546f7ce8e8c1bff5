//! The autocorrelation periodicity loss between a prediction and its ground
//! truth, and a finite-difference check of its gradient.
//!
//!     cargo run --release --example periodicity_loss

use gridwave::periodicity::{l_ap, l_ap_gradient, AutocorrProfile, LagSpec};
use gridwave::synth::{inject_grid, smoothed_noise};
use gridwave::Seed;

fn main() -> gridwave::Result<()> {
    let gt = smoothed_noise(Seed(1), 128, 3, 2.0, 0.15)?;
    let spec = LagSpec::default();
    println!("lags {:?}, {} quadrants", spec.lags, spec.quadrants);
    for amplitude in [0.0, 0.02, 0.05, 0.1] {
        let pred = inject_grid(&gt, Seed(2), 32, amplitude)?;
        println!("grid amplitude {amplitude:<4}  L_AP {:.6}", l_ap(&pred, &gt, &spec)?);
    }

    let pred = inject_grid(&gt, Seed(2), 32, 0.05)?;
    let profile = AutocorrProfile::compute(&pred, &spec)?;
    let term = profile.terms().iter().find(|t| t.lag == 32).expect("lag 32 is in the set");
    println!("A(32) of quadrant {} channel {} along {:?}: {:.4}", term.quadrant, term.channel, term.axis, term.value);

    let grad = l_ap_gradient(&pred, &gt, &spec)?;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in [0, 777, 12_345, 40_000] {
        let bump = |d: f64| -> gridwave::Result<f64> {
            let mut data = pred.data().to_vec();
            data[i] += d;
            l_ap(&gridwave::Image::new(128, 128, 3, data)?, &gt, &spec)
        };
        let fd = (bump(h)? - bump(-h)?) / (2.0 * h);
        worst = worst.max((fd - grad.data()[i]).abs() / fd.abs().max(grad.data()[i].abs()));
        println!("  ∂L/∂x[{i:>5}] analytic {:+.6e}  finite difference {fd:+.6e}", grad.data()[i]);
    }
    println!("worst relative error {worst:.2e}");
    Ok(())
}
