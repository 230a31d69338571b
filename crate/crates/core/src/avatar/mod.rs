//! Reduced blendshape avatar: base Gaussians, learned deltas, and the MLP
//! that maps rig parameters to blendshape weights.

mod blend;
mod mlp;

pub use blend::{
    activate, activate_backward, blend, blend_backward, blend_psi_grad, orthogonality_metric,
    AvatarModel, BlendGrads, Driver, ModelInit,
};
pub use mlp::{map_params, mlp_backward, mlp_backward_into, Dense, MlpWeights, HIDDEN_DIM};
