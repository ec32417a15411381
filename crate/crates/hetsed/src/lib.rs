//! Standard-library side of the toolkit: audio features, file formats and
//! the `hetsed` command line. The algorithms live in `hetsed-core`.

pub mod cli;
mod config;
pub mod error;
pub mod features;
pub mod formats;

pub use error::{Error, Result};
pub use hetsed_core as core;
