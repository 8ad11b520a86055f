//! Simulation and exact-enumeration laboratory for long-range percolation and
//! weighted self-avoiding walks on finitely generated groups.
//!
//! The crate is organized around [`groups::GroupContext`] (marked groups and
//! explicit graphs), [`measures::Measure`] (symmetric step distributions),
//! and the experiment layers on top: long-range percolation with a
//! finite-window pseudo-critical estimator, exact self-avoiding-walk
//! enumeration, return-probability/spectral-radius estimates, and the
//! dimension sweeps tying them together. `selftest` runs the frozen
//! acceptance experiments end to end.

pub mod dimension;
pub mod error;
pub mod groups;
pub mod measures;
pub mod percolation;
pub mod report;
pub mod rng;
pub mod saw;
pub mod selftest;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
