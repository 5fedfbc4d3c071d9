pub mod assess;
pub mod config;
pub mod error;
pub mod experiment;
pub mod fem;
pub mod linalg;
pub mod mesh;
pub mod ns;
pub mod quadrature;
pub mod simulator;
pub mod stability;
pub mod surrogates;
pub mod viscosity;

pub use error::{Error, Result};
