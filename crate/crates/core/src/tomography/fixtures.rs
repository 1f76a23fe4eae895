//! Reference matrices reported for the fabricated 4×4 and 7×7 devices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linops::ComplexMatrix;

pub const FIXTURE_NAMES: [&str; 2] = ["paper-4x4", "paper-7x7"];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Fixture {
    pub name: String,
    /// Experimental estimate `Ũ` as reconstructed from the device data.
    pub experimental: ComplexMatrix,
    /// Published unitary estimate, rounded and therefore only approximately unitary.
    pub reference_unitary: ComplexMatrix,
    /// Ideal matrix the device was designed to implement, if any.
    pub model: Option<ComplexMatrix>,
    /// Absolute error on split-ratio intensities used by the Monte Carlo.
    pub intensity_error: f64,
    /// Phase error in radians used by the Monte Carlo.
    pub phase_error: f64,
}

pub fn fixture(name: &str) -> Result<Fixture> {
    let text = match name {
        "paper-4x4" => include_str!("../../fixtures/paper-4x4.json"),
        "paper-7x7" => include_str!("../../fixtures/paper-7x7.json"),
        _ => {
            return Err(Error::invalid(format!(
                "unknown fixture `{name}` (expected one of {})",
                FIXTURE_NAMES.join(", ")
            )))
        }
    };
    Ok(serde_json::from_str(text)?)
}
