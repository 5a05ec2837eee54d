//! Simulator and analysis toolkit for pairwise hard-core spatial birth-death
//! processes: deterministic seed-reproducible forward dynamics, two-process
//! coupling with discrepancy tracking, coupling-from-the-past stationary
//! sampling, and numeric verification of the decay and convergence bounds.

// validation guards use `!(x >= lo)` deliberately: unlike `x < lo`, the
// negated form also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cftp;
pub mod check;
pub mod config;
pub mod coupling;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod randomness;

pub use config::{InitKind, SimParams};
pub use dynamics::Configuration;
pub use error::{Error, Result};
pub use geometry::{Boundary, Window};
