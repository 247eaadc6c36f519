//! Modeling, simulation and detection toolkit for a flow-driven magnetic
//! nanoparticle communication link.
//!
//! The numeric modules are generic over [`Real`] (`f32` or `f64`); the
//! aliases at the crate root fix the scalar for the common cases.

// `!(x > 0)` deliberately rejects NaN alongside non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cir;
pub mod detection;
pub mod error;
pub mod estimation;
pub mod experiment;
pub mod linalg;
pub mod optim;
pub mod params;
pub mod physics;
pub mod quadrature;
pub mod scalar;
pub mod signal;
pub mod special;

pub use cir::{BetaInit, CirModel, OracleMode, OracleOptions};
pub use error::{Error, Result};
pub use params::TestbedConfig;
pub use physics::{RegimeReport, RegimeThresholds};
pub use scalar::Real;

pub type TestbedConfig64 = TestbedConfig<f64>;
pub type TestbedConfig32 = TestbedConfig<f32>;
pub type BetaInit64 = BetaInit<f64>;
pub type BetaInit32 = BetaInit<f32>;
pub type CirModel64 = CirModel<f64>;
pub type CirModel32 = CirModel<f32>;
