//! Scenario files and the studies run by the `preamble-forge` binary.

// `!(x > 0)` style checks reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod output;
pub mod scenario;
pub mod studies;

pub use scenario::ScenarioFile;
