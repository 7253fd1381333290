pub mod cli;
pub mod continual;
pub mod error;
pub mod fieldlosses;
pub mod fieldmetrics;
pub mod gradcore;
pub mod jsonio;
pub mod manifoldgen;
pub mod netzoo;
pub mod odesolve;
pub mod pdebench;
pub mod teacherflow;
pub mod trainlab;

pub use error::{FieldError, Result};
