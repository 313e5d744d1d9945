//! Simulation studies, CSV ingestion and reporting on top of
//! [`hazrisk_core`].

pub mod censoring;
pub mod cli;
pub mod design;
mod error;
pub mod groups;
pub mod io;
pub mod study;

pub use error::{HazriskError, Result};
