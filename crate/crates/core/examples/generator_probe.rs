//! Applies the GOU generator to the test-function battery and checks that
//! it averages to zero under the stationary law.

use expfun_lab::generator::{apply_generator, stationarity_residual, TestFunction};
use expfun_lab::oracles::ou_normal_case;
use expfun_lab::RngStream;

fn main() -> expfun_lab::Result<()> {
    let case = ou_normal_case(1.0, 1.0)?;
    let sample = case.exact_sample(50_000, RngStream::new(5)).expect("exact sampler");
    for f in TestFunction::battery() {
        let at_one = apply_generator(&case.spec, &f, 1.0)?;
        let (r, se) = stationarity_residual(&case.spec, &f, &sample)?;
        println!("{:<14} Af(1) = {:>9.5}  mean Af(V) = {:>8.5} (z = {:>5.2})", f.name(), at_one.re, r.re, r.norm() / se);
    }
    Ok(())
}
