//! Empirical characteristic function of an exact stationary sample.

use expfun_lab::charstats::{empirical_cf, linear_grid};
use expfun_lab::oracles::ou_normal_case;
use expfun_lab::RngStream;

fn main() -> expfun_lab::Result<()> {
    let case = ou_normal_case(1.0, 1.0)?;
    let sample = case.exact_sample(20_000, RngStream::new(4)).expect("exact sampler");
    let cf = empirical_cf(&sample.values, &linear_grid(-3.0, 3.0, 7))?;
    println!("{:>6} {:>10} {:>10} {:>8}", "u", "re", "exact", "se");
    for i in 0..cf.len() {
        let u = cf.u[i];
        println!("{u:>6.2} {:>10.5} {:>10.5} {:>8.5}", cf.estimate[i].re, (-0.5 * u * u).exp(), cf.stderr[i]);
    }
    cf.write_csv(std::io::stdout())?;
    Ok(())
}
