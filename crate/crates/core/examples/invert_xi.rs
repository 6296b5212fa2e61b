//! Recovers `ψ_{−ξ}` for a subordinator ξ from a sample of `V∞` and a known η.

use expfun_lab::charstats::linear_grid;
use expfun_lab::relations::invert_xi;
use expfun_lab::{estimate_cpp_series, LevyTriplet, RngStream};

fn main() -> expfun_lab::Result<()> {
    let xi = LevyTriplet::poisson(2.0);
    let eta = LevyTriplet::deterministic(1.0);
    let sample = estimate_cpp_series(&xi, &eta, 1e-12, 50_000, RngStream::new(7))?;
    let g = invert_xi(&eta, &sample, &linear_grid(0.5, 3.0, 6))?;
    for (u, psi, se) in g.valid_points() {
        let t = xi.negate().exponent(u)?;
        println!("u = {u:.2}  ψ̂ = {:.4}{:+.4}i  truth {:.4}{:+.4}i  se {se:.4}", psi.re, psi.im, t.re, t.im);
    }
    g.warnings.iter().for_each(|w| println!("warning: {w}"));
    Ok(())
}
