//! Strong and weak error analysis of Euler-type schemes for one-dimensional
//! SDEs with locally Lipschitz coefficients.
//!
//! Every scheme and its fine-grid reference are driven by the same seeded
//! [`path::BrownianGrid`], so pathwise errors are exact couplings and every
//! report is reproducible bit-for-bit across worker counts.

// `!(x > y)` comparisons are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod cli;
pub mod config;
pub mod error;
pub mod erroranalysis;
pub mod experiments;
pub mod limitlaw;
pub mod model;
pub mod path;
pub mod reference;
pub mod runner;
pub mod scheme;
pub mod statkit;
pub mod weakerror;

pub use error::{Error, Result};
pub use model::{Model, Sde};
pub use path::BrownianGrid;
pub use scheme::{Scheme, Trajectory};
