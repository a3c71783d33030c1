pub mod analysis;
pub mod checkpoint;
pub mod corpus;
pub mod distortion;
pub mod error;
pub mod eval;
pub mod image;
pub mod loss;
pub mod nets;
pub mod nn;
pub mod profile;
pub mod rng;
pub mod synth;
pub mod train;
pub mod visor;

pub use error::{Error, Result};
