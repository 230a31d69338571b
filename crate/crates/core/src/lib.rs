//! Reduced Gaussian blendshape head avatars on the CPU.
//!
//! An avatar is a base set of 3D Gaussians plus K learned blendshape deltas.
//! A small MLP maps rig parameters θ to blendshape weights ψ; the blended
//! Gaussians live in the tangent frames of a parametric head mesh and are
//! carried into world space by its deformation before being splatted.

pub mod avatar;
pub mod color_init;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod gaussian;
pub mod io;
pub mod math;
pub mod mesh;
pub mod online;
pub mod render;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use gaussian::{GaussianDelta, GaussianSet};
