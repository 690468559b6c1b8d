pub mod cli;
pub mod embeddings;
pub mod error;
pub mod inference;
pub mod numerics;
pub mod tasks;
pub mod trainer;
pub mod transformer;
pub mod vocab;

pub use error::{Error, Result};
