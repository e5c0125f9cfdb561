//! Configuration-driven experiments: the verification chain, parameter
//! sweeps and report files.

mod config;
mod report;
mod run;

pub use config::*;
pub use report::*;
pub use run::*;
