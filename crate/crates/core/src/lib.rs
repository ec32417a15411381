#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod augment;
pub mod domain_gen;
pub mod error;
pub mod eval;
pub mod fdy;
pub mod postprocess;
mod math;
pub mod ssl;
pub mod synth;
pub mod types;

pub use error::{Error, EventError, Result};
pub use types::*;
