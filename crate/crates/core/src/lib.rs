pub mod autograd;
pub mod checkpoint;
pub mod cli;
pub mod cmcp;
pub mod config;
pub mod error;
pub mod head;
pub mod params;
pub mod tensor;

pub use error::{MmclError, Result};
pub mod data;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod trainer;
pub mod umcc;
