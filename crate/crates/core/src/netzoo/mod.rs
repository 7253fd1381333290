//! Model families exposing trajectories and per-layer Jacobian products.

mod config;
mod model;
mod params;

pub use config::{Activation, Family, ModelConfig};
pub use model::{orthonormal, FieldModel, Pass};
pub use params::ParamSet;
