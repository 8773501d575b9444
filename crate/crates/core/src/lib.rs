#![no_std]
extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod data;
pub mod decoding;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod synthetic;
pub mod training;
pub mod tensor;

pub use error::{Error, Result};
