//! Simulation core for a hydrodynamic-focusing impedance cytometer.
//!
//! The pipeline is split into independent stages:
//!
//! * [`geometry`]: parametric focusing channel (main channel plus two angled
//!   sheath channels) and its rasterization onto a uniform grid.
//! * [`flow`]: steady Stokes flow on the staggered grid.
//! * [`tracer`]: cell species, population sampling and trajectory integration
//!   under Stokes drag and Saffman lift.
//! * [`metrics`]: centerline deviation, minimum spacing at the electrodes and
//!   sensing time.
//! * [`sweep`]: one-axis parameter sweeps, trend checks and design selection.
//! * [`impedance`]: electroquasistatic field between opposing electrodes,
//!   impedance spectra, normalized impedance and CTC/WBC classification.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, configuration and
//! the command line live in the `focusim` crate.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![cfg_attr(not(test), forbid(unsafe_code))]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod error;
pub mod exec;
pub mod flow;
pub mod geometry;
pub mod impedance;
pub mod linalg;
pub mod metrics;
pub mod sweep;
pub mod tracer;
mod vec2;

pub use error::{Error, Result};
pub use exec::{Executor, Sequential};
pub use vec2::Vec2;
