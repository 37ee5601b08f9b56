//! Pareto front learning: a hypernetwork maps preference vectors on the
//! simplex to solutions of a multi-objective problem, trained through a
//! scalarization of the objectives.

pub mod autodiff;
pub mod cli;
pub mod error;
pub mod evaluate;
pub mod hypernet;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod prefs;
pub mod problems;
pub mod scalarize;
pub mod serve;
pub mod train;

pub use error::{Error, Result};
