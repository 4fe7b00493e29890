//! Adaptive quadrature, the Feller transforms and improper-integral verdicts.

pub mod cumulative;
pub mod feller;
pub mod gauss_kronrod;
pub mod improper;

pub use cumulative::LogCumulative;
pub use feller::{build_feller, FellerPair};
pub use gauss_kronrod::{integrate, integrate_log, QuadResult};
pub use improper::{improper_integral, improper_integral_log, window_points, Budget, IntegralVerdict};
