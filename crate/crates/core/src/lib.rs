//! Learning-based architecture discovery and optimization for beyond-diagonal
//! reconfigurable intelligent surfaces (BD-RIS) under non-idealities.

pub mod arch;
pub mod autodiff;
pub mod container;
pub mod error;
pub mod features;
pub mod generator;
pub mod harness;
pub mod nn;
pub mod optimizer;
pub mod physics;
pub mod train;

pub use error::{Error, Result};
