//! Neural-network tomography of noisy Rydberg-atom chains.

pub mod baseline;
pub mod bits;
pub mod error;
pub mod estimators;
pub mod noise;
pub mod pipeline;
pub mod quantum;
pub mod rbm;
pub mod rng;
pub mod training;

pub use bits::{BitString, Dataset, DatasetMeta};
pub use error::{Error, Result};
