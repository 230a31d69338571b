//! Parametric head rig, per-triangle tangent frames, UV binding of Gaussians,
//! and the tangent-to-deformed-space transform.

mod binding;
mod rig;
mod tbn;
mod transform;

pub use binding::{bind_gaussians, GaussianBindings};
pub use rig::{HeadRigConfig, Mesh, ParametricHeadRig};
pub use tbn::{frame_rotation, tbn, TbnFrame};
pub use transform::DeformedFrames;
