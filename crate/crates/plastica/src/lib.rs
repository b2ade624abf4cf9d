//! Scenario files, artifact formats, a rayon executor and the `plastica`
//! command line on top of `plastica-core`.

// `!(x > 0.0)` is used on purpose: it rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod exec;
pub mod formats;
pub mod output;
pub mod plot;
pub mod run;
pub mod scenario;

pub use error::{RunError, ScenarioError};
pub use exec::RayonExecutor;
pub use scenario::{parse_scenario, Scenario};
