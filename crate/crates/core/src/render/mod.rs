//! Differentiable Gaussian splatting on the CPU.

mod batch;
mod camera;
mod preprocess;
mod rasterize;

pub use batch::{render_batch, BatchScheduler, RenderItem, Scheme};
pub use camera::{Camera, Image, RgbaImage};
pub use preprocess::{preprocess, Projection, ProjectedSplat, RenderSettings};
pub use rasterize::{rasterize, render_backward, Contribution, RenderAux};

use crate::error::Result;
use crate::gaussian::GaussianSet;

/// Convenience: preprocess + rasterize on the calling thread.
pub fn render(
    world: &GaussianSet,
    camera: &Camera,
    background: [f64; 3],
    settings: &RenderSettings,
) -> Result<(Image, RenderAux, Projection)> {
    let proj = preprocess(world, camera, settings, false)?;
    let (img, aux) = rasterize(&proj, camera, background, settings, false);
    Ok((img, aux, proj))
}
