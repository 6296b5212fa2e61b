//! Two driving pairs with the same stationary law: a joint compound Poisson
//! pair and its independent counterpart.

use expfun_lab::charstats::{ks_critical_value, ks_distance_two_sample};
use expfun_lab::oracles::dependent_pair;
use expfun_lab::pathsim::Scheme;
use expfun_lab::{estimate_euler, EulerOptions, LevyTriplet, RngStream};

fn main() -> expfun_lab::Result<()> {
    let n = 50_000;
    let (a, b) = dependent_pair(LevyTriplet::brownian(1.0))?;
    let event = EulerOptions { scheme: Some(Scheme::EventDriven), ..Default::default() };
    let sa = estimate_euler(&a, &event, n, RngStream::new(9))?;
    let sb = estimate_euler(&b, &EulerOptions::default(), n, RngStream::new(10))?;
    let ks = ks_distance_two_sample(&sa.values, &sb.values)?;
    println!("KS {ks:.4} (99% critical value {:.4})", ks_critical_value(n, n, 0.01));
    Ok(())
}
