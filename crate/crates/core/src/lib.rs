pub mod data;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod reservoir;
pub mod trainer;

pub use error::{Error, Result};
