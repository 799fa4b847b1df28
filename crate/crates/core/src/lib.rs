//! Stochastic gradient descent for nonlinear inverse problems posed between
//! discrete Lebesgue spaces.

pub mod array_io;
pub mod error;
pub mod experiment;
pub mod forward;
pub mod geometry;
pub mod phantom;
pub mod noise;
pub mod random;
pub mod rates;
pub mod registry;
pub mod solver;

pub use error::{Error, Result};
pub use geometry::{DualVector, GeometryParams, GridVector};
