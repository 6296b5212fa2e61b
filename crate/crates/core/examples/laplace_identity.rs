//! Laplace-transform identity for subordinator drivers: residuals should be
//! within a few standard errors of zero.

use expfun_lab::charstats::linear_grid;
use expfun_lab::relations::laplace_residual;
use expfun_lab::{estimate_euler, DrivingSpec, EulerOptions, LevyTriplet, RngStream};

fn main() -> expfun_lab::Result<()> {
    let xi = LevyTriplet::deterministic(1.0);
    let eta = LevyTriplet::poisson(1.0);
    let sample = estimate_euler(&DrivingSpec::independent(xi.clone(), eta.clone()), &EulerOptions::default(), 50_000, RngStream::new(8))?;
    let r = laplace_residual(&xi, &eta, &sample, &linear_grid(0.0, 5.0, 11))?;
    for ((s, z), ok) in r.u.iter().zip(r.z_scores()).zip(&r.valid_mask) {
        println!("s = {s:.1}  z = {z:>6.2}{}", if *ok { "" } else { "  (masked)" });
    }
    println!("within 4 SE: {:.3}", r.fraction_within(4.0));
    Ok(())
}
