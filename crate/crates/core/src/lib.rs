//! Simulation and quality-assignment library for DASH streaming through a
//! cache-enabled WiFi access point.

pub mod assign;
pub mod buff;
pub mod buffer;
pub mod cache;
pub mod catalog;
pub mod client;
pub mod cph;
pub mod engine;
pub mod error;
pub mod oracle;
pub mod radio;
pub mod scenario;

pub use error::{Error, Result};
