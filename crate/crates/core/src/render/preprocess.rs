//! Stage 1: project world-space Gaussians to screen-space splats and sort by depth.

use nalgebra::{Matrix2, Matrix2x3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::camera::Camera;
use crate::error::{Error, Result};
use crate::gaussian::GaussianSet;
use crate::math::{quat_to_matrix, vec3, Mat3, Vec3};

/// Truncation and culling rules shared by the forward pass, the backward pass,
/// and the reference compositors used in tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderSettings {
    /// Contributions with `α·G` below this are skipped.
    pub alpha_min: f64,
    /// Footprint half-extent in standard deviations.
    pub extent_sigma: f64,
    /// Splats with a smaller footprint radius (pixels) are culled.
    pub min_radius: f64,
    /// Splats at or in front of this camera depth are culled.
    pub near: f64,
    /// Added to the diagonal of every screen-space covariance (pixels²).
    pub dilation: f64,
    /// Keep every per-pixel contribution in the aux output (needed for color init).
    pub record_contributions: bool,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            alpha_min: 1.0 / 255.0,
            extent_sigma: 3.0,
            min_radius: 0.3,
            near: 0.01,
            dilation: 0.3,
            record_contributions: false,
        }
    }
}

impl RenderSettings {
    /// No truncation anywhere: the rendered image is a smooth function of
    /// every parameter, which is what finite-difference checks need.
    pub fn untruncated() -> Self {
        Self {
            alpha_min: 0.0,
            extent_sigma: 1e6,
            min_radius: 0.0,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedSplat {
    /// Index into the world Gaussian set.
    pub index: usize,
    pub mean2d: [f64; 2],
    /// Inverse screen covariance `(a, b, c)` of `[[a, b], [b, c]]`.
    pub conic: [f64; 3],
    pub depth: f64,
    pub color: [f64; 3],
    pub opacity: f64,
    pub radius: f64,
}

/// Depth-sorted splats of one view.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// Front to back; ties broken by Gaussian index.
    pub splats: Vec<ProjectedSplat>,
    pub num_gaussians: usize,
}

/// Intermediate quantities of the projection of one Gaussian.
pub(crate) struct Footprint {
    pub p_cam: Vec3,
    pub jacobian: Matrix2x3<f64>,
    pub rot: Mat3,
    pub cov3d: Mat3,
    pub cov2d: Matrix2<f64>,
    pub conic: Matrix2<f64>,
    pub mean2d: [f64; 2],
}

pub(crate) fn footprint(
    position: [f64; 3],
    rotation: [f64; 4],
    scale: [f64; 3],
    camera: &Camera,
    settings: &RenderSettings,
) -> Option<Footprint> {
    let w = camera.rotation_matrix();
    let p = camera.world_to_camera(&vec3(position));
    if p.z <= settings.near {
        return None;
    }
    let z = p.z;
    let jacobian = Matrix2x3::new(
        camera.fx / z,
        0.0,
        -camera.fx * p.x / (z * z),
        0.0,
        camera.fy / z,
        -camera.fy * p.y / (z * z),
    );
    let rot = quat_to_matrix(rotation);
    let m = rot * Mat3::from_diagonal(&vec3(scale));
    let cov3d = m * m.transpose();
    let t = jacobian * w;
    let mut cov2d = t * cov3d * t.transpose();
    cov2d[(0, 0)] += settings.dilation;
    cov2d[(1, 1)] += settings.dilation;
    let conic = cov2d.try_inverse()?;
    if cov2d.determinant() <= 0.0 {
        return None;
    }
    Some(Footprint {
        p_cam: p,
        jacobian,
        rot,
        cov3d,
        cov2d,
        conic,
        mean2d: [
            camera.fx * p.x / z + camera.cx,
            camera.fy * p.y / z + camera.cy,
        ],
    })
}

fn project_one(
    i: usize,
    world: &GaussianSet,
    camera: &Camera,
    settings: &RenderSettings,
) -> Result<Option<ProjectedSplat>> {
    let finite = world.position[i].iter().all(|v| v.is_finite())
        && world.rotation[i].iter().all(|v| v.is_finite())
        && world.scale[i].iter().all(|v| v.is_finite())
        && world.opacity[i].is_finite()
        && world.color[i].iter().all(|v| v.is_finite());
    if !finite {
        return Err(Error::Numerical {
            index: i,
            reason: "non-finite gaussian parameter".into(),
        });
    }
    let Some(fp) = footprint(world.position[i], world.rotation[i], world.scale[i], camera, settings)
    else {
        return Ok(None);
    };
    let (a, b, c) = (fp.cov2d[(0, 0)], fp.cov2d[(0, 1)], fp.cov2d[(1, 1)]);
    let mid = 0.5 * (a + c);
    let lambda_max = mid + (mid * mid - (a * c - b * b)).max(0.0).sqrt();
    let radius = settings.extent_sigma * lambda_max.sqrt();
    if radius < settings.min_radius {
        return Ok(None);
    }
    let [mx, my] = fp.mean2d;
    if mx + radius < 0.0
        || my + radius < 0.0
        || mx - radius > camera.width as f64
        || my - radius > camera.height as f64
    {
        return Ok(None);
    }
    Ok(Some(ProjectedSplat {
        index: i,
        mean2d: fp.mean2d,
        conic: [fp.conic[(0, 0)], fp.conic[(0, 1)], fp.conic[(1, 1)]],
        depth: fp.p_cam.z,
        color: world.color[i],
        opacity: world.opacity[i],
        radius,
    }))
}

/// Projects every Gaussian of an activated world-space set, culls, and sorts
/// front to back. With `parallel` the per-Gaussian work is split across the
/// current rayon pool; the output does not depend on it.
pub fn preprocess(
    world: &GaussianSet,
    camera: &Camera,
    settings: &RenderSettings,
    parallel: bool,
) -> Result<Projection> {
    world.validate()?;
    let n = world.len();
    let projected: Vec<Option<ProjectedSplat>> = if parallel {
        (0..n)
            .into_par_iter()
            .with_min_len(256)
            .map(|i| project_one(i, world, camera, settings))
            .collect::<Result<_>>()?
    } else {
        (0..n)
            .map(|i| project_one(i, world, camera, settings))
            .collect::<Result<_>>()?
    };
    let mut splats: Vec<ProjectedSplat> = projected.into_iter().flatten().collect();
    splats.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.index.cmp(&b.index)));
    Ok(Projection {
        splats,
        num_gaussians: n,
    })
}
