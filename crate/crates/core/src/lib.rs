//! Monte Carlo laboratory for exponential functionals `∫₀^∞ e^{−ξ_{s−}} dη_s`
//! of bivariate Lévy processes and the generalized Ornstein-Uhlenbeck
//! processes they drive.
//!
//! Specs live in [`levy_spec`], paths in [`pathsim`], samples of the
//! functional in [`expfun`]. [`relations`] checks and inverts the identities
//! linking the stationary law to the driving exponents, [`generator`]
//! evaluates the infinitesimal generator, [`oracles`] holds closed-form cases
//! and [`harness`] runs configured experiments.

pub mod error;
pub mod levy_spec;
pub mod quad;
pub mod pathsim;
pub mod charstats;
pub mod expfun;
pub mod generator;
pub mod relations;
pub mod oracles;
pub mod harness;

pub use error::{LabError, Result};
pub use expfun::{estimate_cpp_series, estimate_euler, EulerOptions, ExpFunSample};
pub use levy_spec::{DrivingSpec, LevyMeasure, LevyTriplet, UlSpec};
pub use pathsim::RngStream;
