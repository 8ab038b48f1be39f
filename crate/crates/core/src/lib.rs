//! Distributed blind macro-calibration of sensor networks.
//!
//! Each node adjusts an affine correction `z = a*y + b` of its raw reading so
//! that calibrated outputs agree across a directed communication graph.
//! The crate provides the per-node recursions, a synchronous-round network
//! simulator with lossy channels and measurement noise, and a spectral
//! toolkit that predicts consensus limits from the mean dynamics.

pub mod calib;
pub mod cli;
pub mod error;
pub mod graph;
pub mod signal;
pub mod sim;
pub mod spectral;

pub use error::{Assumption, Error, Result};
