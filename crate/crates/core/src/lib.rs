pub mod basis;
pub mod cli;
pub mod datagen;
pub mod density;
pub mod error;
pub mod eval;
pub mod estimator;
pub mod models;
pub mod par;
pub mod rng;

pub use error::{Error, Result};
