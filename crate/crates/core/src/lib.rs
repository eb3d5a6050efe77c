pub mod checkpoint;
pub mod cli;
pub mod consolidation;
pub mod data;
pub mod error;
pub mod harness;
pub mod importance;
pub mod nn;
pub mod tensor;

pub use error::{Error, Result};
