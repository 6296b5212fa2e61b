//! Simulates the stationary law of an Ornstein-Uhlenbeck process as the
//! exponential functional of `ξ_t = t`, `η = W`, and compares it with N(0, 1/2).

use expfun_lab::charstats::ks_distance_cdf;
use expfun_lab::{estimate_euler, DrivingSpec, EulerOptions, LevyTriplet, RngStream};
use statrs::distribution::{ContinuousCDF, Normal};

fn main() -> expfun_lab::Result<()> {
    let spec = DrivingSpec::independent(LevyTriplet::deterministic(1.0), LevyTriplet::brownian(1.0));
    let sample = estimate_euler(&spec, &EulerOptions::default(), 20_000, RngStream::new(1))?;
    let law = Normal::new(0.0, 0.5f64.sqrt()).unwrap();
    let ks = ks_distance_cdf(&sample.values, |x| law.cdf(x))?;
    println!("horizon {:.2}, step {}", sample.horizon, sample.step);
    println!("mean {:.4} ± {:.4}", sample.mean(), sample.mean_se());
    println!("KS distance to N(0, 1/2): {ks:.4}");
    Ok(())
}
