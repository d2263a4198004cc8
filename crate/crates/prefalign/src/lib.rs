//! Preference-data construction, a small text-conditioned diffusion model
//! and cross-validation preference alignment, with file formats, reports
//! and a command-line driver.

pub mod checkpoint;
pub mod cli;
pub mod clients;
pub mod config;
pub mod dataset;
pub mod error;
pub mod forge;
pub mod io;
pub mod pipeline;
pub mod report;
pub mod taxonomy;

pub use error::{ClientError, Error, Result};
