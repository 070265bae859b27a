//! Agent-based simulation of commuter travel under staged reopening.

pub mod calibration;
pub mod error;
pub mod mode_choice;
pub mod network;
pub mod population;
pub mod scenario;
pub mod seed;
pub mod sim;
pub mod types;

pub use error::{Error, Result};
