pub mod checkpoint;
pub mod conv;
pub mod error;
pub mod graph;
pub mod harness;
pub mod kernel;
pub mod nn;
pub mod oracle;
pub mod pseudo;
pub mod real;
pub mod tensor;

pub use error::{Error, Result};
