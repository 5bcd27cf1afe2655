//! Desk-scale models of a fault-tolerant flight computing stack.
//!
//! * [`guidance`]: a three-stage (initialize, iterate, validate) first-order
//!   solver for the convexified minimum-fuel powered-descent problem.
//! * [`arbiter`]: M+2 replica voting in static (checkpoint) and dynamic
//!   (per control period) modes.
//! * [`fault`]: single-bit-flip injection and seeded Monte Carlo campaigns.
//! * [`acs`]: a single-axis attitude loop with replicated PD controllers.
//! * [`lvs`]: FFT landmark correlation with a timing harness.

pub mod acs;
pub mod arbiter;
pub mod error;
pub mod fault;
pub mod guidance;
pub mod lvs;
pub mod seed;

pub use error::{Error, Result};

/// Version tag written into every JSON document this crate produces.
pub const SCHEMA_VERSION: u32 = 1;
