//! One path of the generalized Ornstein-Uhlenbeck process started at 5.

use expfun_lab::expfun::gou_path;
use expfun_lab::{DrivingSpec, LevyTriplet, RngStream};

fn main() -> expfun_lab::Result<()> {
    let spec = DrivingSpec::independent(LevyTriplet::deterministic(1.0), LevyTriplet::poisson(2.0));
    let path = gou_path(&spec, 5.0, 5.0, 0.01, RngStream::new(12))?;
    for (t, x) in path.times.iter().zip(path.levels(0)).step_by(50) {
        println!("t = {t:.2}  V = {x:.4}");
    }
    Ok(())
}
