//! Max-min end-to-end user rates in k-ring self-backhauled mmWave networks.
//!
//! The crate is organised bottom-up:
//!
//! - [`topology`] builds the street-grid deployment, places UEs and associates them.
//! - [`radio`] turns geometry into instantaneous link rates and interference powers.
//! - [`routing`] builds route tables (highway routing or user supplied) and effective loads.
//! - [`analysis`] holds the closed-form max-min engines and the hierarchical scheduler.
//! - [`lp`] is a small revised-simplex solver used by [`oracle`], the joint
//!   scheduling LP that cross-checks the closed forms.
//! - [`sim`] is a slotted backpressure / proportional-fair queueing simulator.
//!
//! Batch work (schedule rate evaluation, parameter sweeps, independent runs)
//! goes through [`exec`], which uses rayon when the `parallel` feature is on.

pub mod analysis;
pub mod error;
pub mod exec;
pub mod lp;
pub mod oracle;
pub mod radio;
pub mod routing;
pub mod sim;
pub mod topology;

pub use error::{Error, Result};
pub use exec::Exec;
