pub mod error;
pub mod fem;
pub mod hmm;
pub mod inverse;
pub mod kalman;
pub mod markov;
pub mod mesh;
pub mod protocol;
pub mod sim;

pub use error::{Error, Result};
