//! Compound Poisson ξ: the series estimator against the Euler estimator.

use expfun_lab::{estimate_cpp_series, estimate_euler, DrivingSpec, EulerOptions, LevyTriplet, RngStream};

fn main() -> expfun_lab::Result<()> {
    let xi = LevyTriplet::poisson(1.0);
    let eta = LevyTriplet::deterministic(1.0);
    let n = 50_000;

    let series = estimate_cpp_series(&xi, &eta, 1e-12, n, RngStream::new(2))?;
    let euler = estimate_euler(&DrivingSpec::independent(xi, eta), &EulerOptions::default(), n, RngStream::new(3))?;
    // V = Σ e^{−k}τ_k with τ_k ~ Exp(1).
    let target = 1.0 / (1.0 - (-1f64).exp());
    println!("target  {target:.5}");
    println!("series  {:.5} ± {:.5}", series.mean(), series.mean_se());
    println!("euler   {:.5} ± {:.5}", euler.mean(), euler.mean_se());
    Ok(())
}
