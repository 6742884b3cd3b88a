pub mod error;
pub mod geometry;
pub mod potentials;
pub mod bvp;
pub mod reflections;
pub mod projection;
pub mod config;
pub mod experiments;

pub use error::{Error, Result};
