pub mod cli;
pub mod error;
pub mod forecast;
pub mod gibbs;
pub mod model;
pub mod rng;
pub mod selection;
pub mod sim;
pub mod stats;

pub use error::{MtarError, Result};
