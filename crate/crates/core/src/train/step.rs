//! The per-frame chain θ → ψ → blend → activate → transform → render → L1,
//! and its adjoint.

use crate::avatar::{
    activate, activate_backward, blend, blend_backward, mlp_backward_into, AvatarModel, Driver,
    MlpWeights,
};
use crate::color_init::{estimate_colors, ColorEstimate};
use crate::error::{Error, Result};
use crate::gaussian::{GaussianDelta, GaussianSet};
use crate::mesh::DeformedFrames;
use crate::render::{
    preprocess, rasterize, render_backward, Camera, Image, Projection, RenderSettings, RgbaImage,
};

use super::loss::l1_loss;

/// Gradients for every trainable scalar of an [`AvatarModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub base: GaussianSet,
    pub deltas: Vec<GaussianDelta>,
    pub mlp: MlpWeights,
}

impl ModelGrads {
    pub fn zeros_like(model: &AvatarModel) -> Self {
        let n = model.num_gaussians();
        Self {
            base: GaussianSet::zeros(n),
            deltas: vec![GaussianDelta::zeros(n); model.num_blendshapes()],
            mlp: MlpWeights::zeros(
                model.mlp.input_dim(),
                model.mlp.hidden_dim(),
                model.mlp.output_dim(),
            ),
        }
    }

    pub fn add_assign(&mut self, other: &ModelGrads) {
        self.base.add_assign(&other.base);
        for (a, b) in self.deltas.iter_mut().zip(&other.deltas) {
            for (x, y) in a.scalars_mut().zip(b.flatten()) {
                *x += y;
            }
        }
        self.mlp.add_assign(&other.mlp);
    }

    /// Same order as [`model_scalars_mut`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.base.flatten();
        for d in &self.deltas {
            out.extend(d.flatten());
        }
        out.extend(self.mlp.flatten());
        out
    }
}

/// Every trainable scalar: base attributes, then each blendshape, then the MLP.
pub fn model_scalars_mut(model: &mut AvatarModel) -> impl Iterator<Item = &mut f64> {
    model
        .base
        .scalars_mut()
        .chain(model.deltas.iter_mut().flat_map(|d| d.scalars_mut()))
        .chain(model.mlp.scalars_mut())
}

/// Intermediate values of the forward chain up to screen-space projection.
pub struct Forward {
    pub psi: Vec<f64>,
    pub raw: GaussianSet,
    pub world: GaussianSet,
    pub projection: Projection,
}

/// Activated world-space Gaussians for one frame, with the intermediates the
/// backward pass needs.
pub fn forward(
    model: &AvatarModel,
    theta: &[f64],
    frames: &DeformedFrames,
    camera: &Camera,
    settings: &RenderSettings,
    parallel: bool,
) -> Result<Forward> {
    let psi = model.weights(theta)?;
    let raw = blend(model, &psi)?;
    let tangent = activate(&raw)?;
    let world = frames.transform(&tangent, &model.bindings)?;
    let projection = preprocess(&world, camera, settings, parallel)?;
    Ok(Forward {
        psi,
        raw,
        world,
        projection,
    })
}

/// Renders the model for rig parameters θ over a constant background.
pub fn render_model(
    model: &AvatarModel,
    frames: &DeformedFrames,
    theta: &[f64],
    camera: &Camera,
    background: [f64; 3],
    settings: &RenderSettings,
) -> Result<Image> {
    let fwd = forward(model, theta, frames, camera, settings, false)?;
    Ok(rasterize(&fwd.projection, camera, background, settings, false).0)
}

/// One training view.
pub struct FrameInput<'a> {
    pub theta: &'a [f64],
    pub frames: &'a DeformedFrames,
    pub target: &'a RgbaImage,
    pub background: [f64; 3],
}

pub struct FrameResult {
    /// L1 against the target composited over the frame's background.
    pub loss: f64,
    /// L1 of the same prediction and target both taken over black.
    pub black_l1: f64,
    pub grads: ModelGrads,
    pub colors: Option<ColorEstimate>,
}

/// Rasterizes, scores and backpropagates one frame whose forward chain is
/// already computed. `color_threshold` requests color-init estimates.
pub fn backward(
    model: &AvatarModel,
    camera: &Camera,
    input: &FrameInput<'_>,
    fwd: Forward,
    settings: &RenderSettings,
    color_threshold: Option<f64>,
    parallel: bool,
) -> Result<FrameResult> {
    let settings = RenderSettings {
        record_contributions: color_threshold.is_some(),
        ..*settings
    };
    let bg = input.background;
    let (pred, aux) = rasterize(&fwd.projection, camera, bg, &settings, parallel);
    let target = input.target.over(bg);
    let (loss, grad_image) = l1_loss(&pred, &target)?;

    let mut black = 0.0;
    for ((p, tr), rgba) in pred.data.iter().zip(&aux.transmittance).zip(&input.target.data) {
        for ch in 0..3 {
            black += (p[ch] - tr * bg[ch] - rgba[ch] * rgba[3]).abs();
        }
    }
    let black_l1 = black / (pred.data.len() * 3) as f64;

    let colors = match color_threshold {
        Some(delta) => Some(estimate_colors(&aux, &target, delta)?),
        None => None,
    };

    let g_world = render_backward(
        &fwd.world,
        camera,
        &fwd.projection,
        bg,
        &grad_image,
        &settings,
        parallel,
    );
    let g_tangent = input.frames.transform_backward(&g_world, &model.bindings);
    let g_raw = activate_backward(&fwd.raw, &g_tangent);
    let blend_grads = blend_backward(model, &fwd.psi, &g_raw)?;
    let mut mlp = MlpWeights::zeros(
        model.mlp.input_dim(),
        model.mlp.hidden_dim(),
        model.mlp.output_dim(),
    );
    if model.driver == Driver::Mlp {
        mlp_backward_into(&model.mlp, input.theta, &blend_grads.psi, &mut mlp)?;
    }
    Ok(FrameResult {
        loss,
        black_l1,
        grads: ModelGrads {
            base: blend_grads.base,
            deltas: blend_grads.deltas,
            mlp,
        },
        colors,
    })
}

/// Forward and backward for one frame on the calling thread.
pub fn frame_loss_and_grads(
    model: &AvatarModel,
    camera: &Camera,
    input: &FrameInput<'_>,
    settings: &RenderSettings,
) -> Result<FrameResult> {
    let fwd = forward(model, input.theta, input.frames, camera, settings, false)?;
    backward(model, camera, input, fwd, settings, None, false)
}

/// Loss only, for finite-difference checks.
pub fn frame_loss(
    model: &AvatarModel,
    camera: &Camera,
    input: &FrameInput<'_>,
    settings: &RenderSettings,
) -> Result<f64> {
    let pred = render_model(model, input.frames, input.theta, camera, input.background, settings)?;
    let (loss, _) = l1_loss(&pred, &input.target.over(input.background))?;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss { step: 0 });
    }
    Ok(loss)
}
