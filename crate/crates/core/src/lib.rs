pub mod data;
pub mod diagnostics;
pub mod domain;
pub mod error;
pub mod fourier;
pub mod irk4;
pub mod problem;
pub mod spectral;

pub use error::{Error, Result};
