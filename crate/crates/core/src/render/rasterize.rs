//! Stage 2: per-pixel front-to-back compositing, and its adjoint.

use rayon::prelude::*;

use super::camera::{Camera, Image};
use super::preprocess::{footprint, Projection, ProjectedSplat, RenderSettings};
use crate::gaussian::GaussianSet;
use crate::math::{quat_to_matrix_backward, vec3, Mat3, Vec3};
use nalgebra::{Matrix2, Matrix2x3};

/// One non-skipped splat contribution `w = α·G·T` at one pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contribution {
    pub pixel: u32,
    pub gaussian: u32,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderAux {
    /// Transmittance left after the last splat, per pixel.
    pub transmittance: Vec<f64>,
    /// Per Gaussian, the largest blend weight it received at any pixel
    /// (0 when it never contributed).
    pub max_weight: Vec<f64>,
    /// Present when [`RenderSettings::record_contributions`] is set; ordered
    /// by pixel, then front to back.
    pub contributions: Option<Vec<Contribution>>,
}

/// Splat indices whose footprint touches each image row, in depth order.
struct RowBins {
    rows: Vec<Vec<u32>>,
    x_range: Vec<(i64, i64)>,
}

fn pixel_span(center: f64, radius: f64, limit: u32) -> Option<(i64, i64)> {
    // Pixel centres at i + 0.5 within [center - radius, center + radius].
    let lo = ((center - radius - 0.5).ceil() as i64).max(0);
    let hi = ((center + radius - 0.5).floor() as i64).min(limit as i64 - 1);
    (lo <= hi).then_some((lo, hi))
}

impl RowBins {
    fn new(splats: &[ProjectedSplat], camera: &Camera) -> Self {
        let mut rows = vec![Vec::new(); camera.height as usize];
        let mut x_range = Vec::with_capacity(splats.len());
        for (si, s) in splats.iter().enumerate() {
            let xs = pixel_span(s.mean2d[0], s.radius, camera.width);
            let ys = pixel_span(s.mean2d[1], s.radius, camera.height);
            x_range.push(xs.unwrap_or((1, 0)));
            if let (Some(_), Some((y0, y1))) = (xs, ys) {
                for row in &mut rows[y0 as usize..=y1 as usize] {
                    row.push(si as u32);
                }
            }
        }
        Self { rows, x_range }
    }
}

struct Hit {
    splat: u32,
    alpha: f64,
    gauss: f64,
    dx: f64,
    dy: f64,
    transmittance: f64,
}

/// Walks the splats covering pixel `(x, y)` front to back, calling `f` for
/// every contribution that survives truncation. Returns the final transmittance.
#[inline]
fn composite_pixel(
    x: u32,
    y: u32,
    bins: &RowBins,
    splats: &[ProjectedSplat],
    settings: &RenderSettings,
    mut f: impl FnMut(usize, Hit),
) -> f64 {
    let px = x as f64 + 0.5;
    let py = y as f64 + 0.5;
    let xi = x as i64;
    let mut t = 1.0;
    for (slot, &si) in bins.rows[y as usize].iter().enumerate() {
        let (x0, x1) = bins.x_range[si as usize];
        if xi < x0 || xi > x1 {
            continue;
        }
        let s = &splats[si as usize];
        let dx = px - s.mean2d[0];
        let dy = py - s.mean2d[1];
        let [a, b, c] = s.conic;
        let power = -0.5 * (a * dx * dx + c * dy * dy) - b * dx * dy;
        if power > 0.0 {
            continue;
        }
        let gauss = power.exp();
        let alpha = s.opacity * gauss;
        if alpha < settings.alpha_min || alpha <= 0.0 {
            continue;
        }
        f(
            slot,
            Hit {
                splat: si,
                alpha,
                gauss,
                dx,
                dy,
                transmittance: t,
            },
        );
        t *= 1.0 - alpha;
    }
    t
}

struct RowOutput {
    color: Vec<[f64; 3]>,
    transmittance: Vec<f64>,
    slot_max: Vec<f64>,
    contributions: Vec<Contribution>,
}

fn render_row(
    y: u32,
    bins: &RowBins,
    splats: &[ProjectedSplat],
    camera: &Camera,
    background: [f64; 3],
    settings: &RenderSettings,
) -> RowOutput {
    let w = camera.width;
    let mut out = RowOutput {
        color: Vec::with_capacity(w as usize),
        transmittance: Vec::with_capacity(w as usize),
        slot_max: vec![0.0; bins.rows[y as usize].len()],
        contributions: Vec::new(),
    };
    for x in 0..w {
        let mut c = [0.0; 3];
        let t_final = composite_pixel(x, y, bins, splats, settings, |slot, hit| {
            let s = &splats[hit.splat as usize];
            let weight = hit.alpha * hit.transmittance;
            for ch in 0..3 {
                c[ch] += s.color[ch] * weight;
            }
            if weight > out.slot_max[slot] {
                out.slot_max[slot] = weight;
            }
            if settings.record_contributions {
                out.contributions.push(Contribution {
                    pixel: y * w + x,
                    gaussian: s.index as u32,
                    weight,
                });
            }
        });
        for ch in 0..3 {
            c[ch] += t_final * background[ch];
        }
        out.color.push(c);
        out.transmittance.push(t_final);
    }
    out
}

/// Composites the depth-sorted splats over `background`. With `parallel` the
/// rows are split across the current rayon pool; the output is bitwise
/// independent of it.
pub fn rasterize(
    projection: &Projection,
    camera: &Camera,
    background: [f64; 3],
    settings: &RenderSettings,
    parallel: bool,
) -> (Image, RenderAux) {
    let splats = &projection.splats;
    let bins = RowBins::new(splats, camera);
    let rows: Vec<RowOutput> = if parallel {
        (0..camera.height)
            .into_par_iter()
            .map(|y| render_row(y, &bins, splats, camera, background, settings))
            .collect()
    } else {
        (0..camera.height)
            .map(|y| render_row(y, &bins, splats, camera, background, settings))
            .collect()
    };
    let mut image = Image::filled(camera.width, camera.height, [0.0; 3]);
    let mut aux = RenderAux {
        transmittance: Vec::with_capacity(camera.num_pixels()),
        max_weight: vec![0.0; projection.num_gaussians],
        contributions: settings.record_contributions.then(Vec::new),
    };
    image.data.clear();
    for (y, row) in rows.into_iter().enumerate() {
        image.data.extend(row.color);
        aux.transmittance.extend(row.transmittance);
        for (slot, &si) in bins.rows[y].iter().enumerate() {
            let g = splats[si as usize].index;
            if row.slot_max[slot] > aux.max_weight[g] {
                aux.max_weight[g] = row.slot_max[slot];
            }
        }
        if let Some(c) = aux.contributions.as_mut() {
            c.extend(row.contributions);
        }
    }
    (image, aux)
}

/// Gradient w.r.t. the screen-space parameters of one splat.
#[derive(Debug, Clone, Copy, Default)]
struct SplatGrad {
    mean2d: [f64; 2],
    /// Gradients w.r.t. `a`, `b`, `c` of the conic as used in the exponent
    /// `-(a dx² + 2 b dx dy + c dy²)/2`.
    conic: [f64; 3],
    opacity: f64,
    color: [f64; 3],
}

impl SplatGrad {
    fn add(&mut self, o: &SplatGrad) {
        for i in 0..2 {
            self.mean2d[i] += o.mean2d[i];
        }
        for i in 0..3 {
            self.conic[i] += o.conic[i];
            self.color[i] += o.color[i];
        }
        self.opacity += o.opacity;
    }
}

const BACKWARD_ROW_CHUNK: u32 = 8;

fn backward_rows(
    rows: std::ops::Range<u32>,
    bins: &RowBins,
    splats: &[ProjectedSplat],
    camera: &Camera,
    background: [f64; 3],
    grad_image: &Image,
    settings: &RenderSettings,
) -> Vec<SplatGrad> {
    let mut grads = vec![SplatGrad::default(); splats.len()];
    let mut hits: Vec<Hit> = Vec::new();
    for y in rows {
        for x in 0..camera.width {
            let g_pix = grad_image.get(x, y);
            if g_pix == [0.0; 3] {
                continue;
            }
            hits.clear();
            composite_pixel(x, y, bins, splats, settings, |_, hit| hits.push(hit));
            // Colour of everything behind the current splat, composited as
            // if it started with full transmittance.
            let mut behind = background;
            for hit in hits.iter().rev() {
                let s = &splats[hit.splat as usize];
                let g = &mut grads[hit.splat as usize];
                let weight = hit.alpha * hit.transmittance;
                let mut g_alpha = 0.0;
                for ch in 0..3 {
                    g.color[ch] += weight * g_pix[ch];
                    g_alpha += g_pix[ch] * hit.transmittance * (s.color[ch] - behind[ch]);
                    behind[ch] = s.color[ch] * hit.alpha + (1.0 - hit.alpha) * behind[ch];
                }
                g.opacity += g_alpha * hit.gauss;
                let g_power = g_alpha * s.opacity * hit.gauss;
                let [a, b, c] = s.conic;
                g.conic[0] += -0.5 * hit.dx * hit.dx * g_power;
                g.conic[1] += -hit.dx * hit.dy * g_power;
                g.conic[2] += -0.5 * hit.dy * hit.dy * g_power;
                g.mean2d[0] += (a * hit.dx + b * hit.dy) * g_power;
                g.mean2d[1] += (b * hit.dx + c * hit.dy) * g_power;
            }
        }
    }
    grads
}

/// Adjoint of preprocess + rasterize: gradients of a scalar loss w.r.t. the
/// activated world-space Gaussians, given `∂L/∂image`. Culled Gaussians get
/// zero gradients; the depth order is treated as constant.
pub fn render_backward(
    world: &GaussianSet,
    camera: &Camera,
    projection: &Projection,
    background: [f64; 3],
    grad_image: &Image,
    settings: &RenderSettings,
    parallel: bool,
) -> GaussianSet {
    let splats = &projection.splats;
    let bins = RowBins::new(splats, camera);
    let chunks: Vec<std::ops::Range<u32>> = (0..camera.height)
        .step_by(BACKWARD_ROW_CHUNK as usize)
        .map(|y| y..(y + BACKWARD_ROW_CHUNK).min(camera.height))
        .collect();
    let run = |r: &std::ops::Range<u32>| {
        backward_rows(r.clone(), &bins, splats, camera, background, grad_image, settings)
    };
    let partials: Vec<Vec<SplatGrad>> = if parallel {
        chunks.par_iter().map(run).collect()
    } else {
        chunks.iter().map(run).collect()
    };
    let mut splat_grads = vec![SplatGrad::default(); splats.len()];
    for part in &partials {
        for (acc, g) in splat_grads.iter_mut().zip(part) {
            acc.add(g);
        }
    }

    let mut out = GaussianSet::zeros(world.len());
    for (s, g) in splats.iter().zip(&splat_grads) {
        let i = s.index;
        out.color[i] = g.color;
        out.opacity[i] = g.opacity;
        let (gp, gq, gs) = project_backward(world, i, camera, settings, g);
        out.position[i] = gp;
        out.rotation[i] = gq;
        out.scale[i] = gs;
    }
    out
}

/// Pulls mean/conic gradients back onto world position, rotation and scale.
fn project_backward(
    world: &GaussianSet,
    i: usize,
    camera: &Camera,
    settings: &RenderSettings,
    g: &SplatGrad,
) -> ([f64; 3], [f64; 4], [f64; 3]) {
    let fp = footprint(world.position[i], world.rotation[i], world.scale[i], camera, settings)
        .expect("projected splat must have a footprint");
    let w = camera.rotation_matrix();
    let p = fp.p_cam;
    let z = p.z;
    let (fx, fy) = (camera.fx, camera.fy);

    // conic = cov⁻¹ ⇒ dL/dcov = −K Gk K with Gk the symmetric conic gradient.
    let gk = Matrix2::new(g.conic[0], 0.5 * g.conic[1], 0.5 * g.conic[1], g.conic[2]);
    let g_cov2d = -(fp.conic * gk * fp.conic);

    let t = fp.jacobian * w;
    let g_cov3d: Mat3 = t.transpose() * g_cov2d * t;
    let g_t: Matrix2x3<f64> = 2.0 * g_cov2d * t * fp.cov3d;
    let g_j: Matrix2x3<f64> = g_t * w.transpose();

    let scale = vec3(world.scale[i]);
    let m = fp.rot * Mat3::from_diagonal(&scale);
    let g_m = 2.0 * g_cov3d * m;
    let mut g_rot = g_m;
    let mut g_scale = [0.0; 3];
    for j in 0..3 {
        for r in 0..3 {
            g_rot[(r, j)] = g_m[(r, j)] * scale[j];
            g_scale[j] += fp.rot[(r, j)] * g_m[(r, j)];
        }
    }
    let g_quat = quat_to_matrix_backward(world.rotation[i], &g_rot);

    let z2 = z * z;
    let z3 = z2 * z;
    let mut g_p = Vec3::new(
        g.mean2d[0] * fx / z,
        g.mean2d[1] * fy / z,
        -g.mean2d[0] * fx * p.x / z2 - g.mean2d[1] * fy * p.y / z2,
    );
    g_p.x += g_j[(0, 2)] * (-fx / z2);
    g_p.y += g_j[(1, 2)] * (-fy / z2);
    g_p.z += g_j[(0, 0)] * (-fx / z2)
        + g_j[(0, 2)] * (2.0 * fx * p.x / z3)
        + g_j[(1, 1)] * (-fy / z2)
        + g_j[(1, 2)] * (2.0 * fy * p.y / z3);
    let g_pos = w.transpose() * g_p;
    ([g_pos.x, g_pos.y, g_pos.z], g_quat, g_scale)
}
