//! Mixed finite elements on quadrilateral meshes.

pub mod assembly;
pub mod reference;
pub mod space;

pub use assembly::{
    assemble_body_force, assemble_convection, assemble_diffusion, assemble_divergence, assemble_forcing,
    assemble_newton_derivative, assemble_velocity_mass, Forcing,
};
pub use space::{MixedSpace, PressureSpace, SpatialField};
