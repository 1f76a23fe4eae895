//! Simulation, tomography and randomness certification for a four-arm
//! multi-core-fiber interferometer.

pub mod commands;
pub mod error;
pub mod io;
pub mod linops;
pub mod mdi;
pub mod sdp;
pub mod sim;
pub mod tomography;

pub use error::{Error, Result};
