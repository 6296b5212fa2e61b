//! Recovers the exponent of η from a sample of `V∞` and a known ξ.

use expfun_lab::charstats::linear_grid;
use expfun_lab::relations::invert_eta;
use expfun_lab::{estimate_euler, DrivingSpec, EulerOptions, LevyTriplet, RngStream};

fn main() -> expfun_lab::Result<()> {
    let xi = LevyTriplet::deterministic(1.0);
    let eta = LevyTriplet::compound_poisson(1.0, &[(1.0, 0.5), (-1.0, 0.5)])?;
    let sample = estimate_euler(&DrivingSpec::independent(xi.clone(), eta.clone()), &EulerOptions::default(), 50_000, RngStream::new(6))?;
    let g = invert_eta(&xi, &sample, &linear_grid(-3.0, 3.0, 13))?;
    for (u, psi, se) in g.valid_points() {
        println!("u = {u:>5.2}  ψ̂ = {:>8.4}{:+.4}i  truth {:>8.4}  se {se:.4}", psi.re, psi.im, eta.exponent(u)?.re);
    }
    println!("within 4 SE: {:.3}", g.fraction_within(|u| eta.exponent(u).unwrap(), 4.0));
    Ok(())
}
