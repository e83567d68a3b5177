pub mod autodiff;
pub mod bernstein;
mod compensated;
pub mod distributions;
pub mod error;
pub mod quadrature;
pub mod rank;
pub mod metrics;
pub mod rng;
pub mod slicing;
pub mod surrogate;
pub mod training;

pub use error::{Error, Result};
