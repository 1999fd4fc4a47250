pub mod audio;
pub mod dsp;
pub mod error;
pub mod experiment;
pub mod features;
pub mod fixture;
pub mod gmm;
pub mod graph;
pub mod linalg;
pub mod pipeline;
pub mod seed;
pub mod sim;
pub mod tensor_io;

pub use error::{Error, Result};
