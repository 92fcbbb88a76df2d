pub mod audit;
pub mod components;
pub mod dataset;
pub mod error;
pub mod fusion;
pub mod inpaint;
pub mod io;
pub mod mask;
pub mod metrics;
pub mod model;
pub mod par;
pub mod pipeline;
pub mod rng;
pub mod strategies;

pub use error::{Error, Result};
