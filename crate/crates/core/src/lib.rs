//! Simulation and exact numerics for exceedance clusters of regenerative
//! sequences built from a prescribed cluster-size law.
//!
//! * [`laws`]: cluster laws, the stationary delay law and the censored cycle law.
//! * [`pathgen`]: finite-mean and censored constructions of `X_k = Y_{η(k)}`.
//! * [`exceed`]: levels, exceedance counts, cycle and runs clusters.
//! * [`stats`]: goodness of fit and extremal index estimation.
//! * [`oracle`]: Monte-Carlo-free reference values.
//! * [`cli`]: the experiment driver behind the `cluster-limits` binary.

pub mod cli;
pub mod error;
pub mod exceed;
pub mod laws;
pub mod numeric;
pub mod oracle;
pub mod pathgen;
pub mod seed;
pub mod stats;

pub use error::{Error, Result};
