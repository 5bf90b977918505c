pub mod autodiff;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod io;
pub mod math;
pub mod metrics;
pub mod models;
pub mod pixels;
pub mod render;
pub mod rng;
pub mod scene;
pub mod train;

pub use error::{Error, Result};
