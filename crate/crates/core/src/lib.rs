//! Fisher information, effective FIMs and Cramér-Rao bounds for 9D receiver
//! localization (position, orientation, velocity) from LEO satellite
//! delay and Doppler measurements, with unknown clock offsets as nuisances.

// NaN must fail validation, so checks are written as `!(x > 0.0)`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel_fim;
pub mod crlb_cli;
pub mod efim_engine;
pub mod error;
pub mod feasibility;
pub mod geometry;
pub mod linalg;
pub mod location_transform;
pub mod oracle;
pub mod reduction;
pub mod scenario;
pub mod signal_model;

pub use efim_engine::{Block, OffsetConfig, Scenario};
pub use error::{Error, Result};
