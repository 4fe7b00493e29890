//! JSON-configured runs of the `feller-uniq` library: classification,
//! entrance tests, Fokker–Planck and Feynman–Kac solves, and cross-validation.

pub mod config;
pub mod report;
pub mod run;

mod error;

pub use config::{parse_config, Mode, RunConfig};
pub use error::CliError;
pub use report::Report;
pub use run::run;
