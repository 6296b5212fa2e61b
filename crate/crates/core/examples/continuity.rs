//! Continuity checks over two families: one whose log-moment condition
//! blows up and one that converges.

use expfun_lab::harness::{continuity_suite, ContinuityFamily};
use expfun_lab::{LevyTriplet, RngStream};

fn main() -> expfun_lab::Result<()> {
    let xi = LevyTriplet::deterministic(1.0);
    for family in [ContinuityFamily::discont(&[2, 4, 8])?, ContinuityFamily::drift_brownian(&[2, 4, 8, 16], 1.0)?] {
        let r = continuity_suite(&family, &xi, 1.0, 10_000, RngStream::new(11))?;
        println!("{}: {}", r.family, r.verdict);
        for row in &r.rows {
            println!("  n = {:>2}  cond = {:>9.3}  KS = {:.4}", row.n, row.cond_contcond6, row.ks_to_limit);
        }
    }
    Ok(())
}
