//! Synthetic sequences rendered from a hidden ground-truth avatar.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::avatar::{map_params, AvatarModel, Driver, MlpWeights};
use crate::color_init::ColorInitState;
use crate::dataset::{Frame, SequenceDataset};
use crate::error::{Error, Result};
use crate::gaussian::{logit, GaussianDelta, GaussianSet};
use crate::io::{save_model, save_sequence};
use crate::mesh::{bind_gaussians, DeformedFrames, HeadRigConfig, ParametricHeadRig};
use crate::render::{rasterize, Camera, RenderSettings, RgbaImage};
use crate::train::forward;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub frames: usize,
    /// Square image size in pixels.
    pub size: u32,
    pub rig: HeadRigConfig,
    pub uv_resolution: usize,
    /// Number of ground-truth blendshapes.
    pub blendshapes: usize,
    pub camera_distance: f64,
    /// Focal length as a multiple of the image size.
    pub focal_factor: f64,
    /// Peak expression coefficient of the sinusoidal trajectories.
    pub expression_amplitude: f64,
    /// Peak head yaw in radians.
    pub yaw_amplitude: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            frames: 200,
            size: 64,
            rig: HeadRigConfig::default(),
            uv_resolution: 32,
            blendshapes: 4,
            camera_distance: 4.0,
            focal_factor: 1.25,
            expression_amplitude: 1.0,
            yaw_amplitude: 0.25,
            seed: 0,
        }
    }
}

pub struct SynthOutput {
    pub dataset: SequenceDataset,
    pub ground_truth: AvatarModel,
}

fn smoothstep(edge: f64, x: f64) -> f64 {
    (0.5 - x / edge).clamp(0.0, 1.0).powi(2) * 4.0
}

/// Soft blob weight around `c` with radii `r` in UV space.
fn blob(uv: [f64; 2], c: [f64; 2], r: [f64; 2]) -> f64 {
    let d = ((uv[0] - c[0]) / r[0]).powi(2) + ((uv[1] - c[1]) / r[1]).powi(2);
    (-d).exp()
}

/// Albedo painted in UV space: skin, hair cap, eyes, brows, mouth, and a
/// low-contrast texture.
fn albedo(uv: [f64; 2]) -> [f64; 3] {
    let [u, v] = uv;
    let mut c = [0.86, 0.66, 0.55];
    let hair = smoothstep(0.06, v - 0.27);
    for ch in 0..3 {
        let tex = 0.05 * (40.0 * u).sin() * (30.0 * v).sin();
        c[ch] = c[ch] * (1.0 - hair) + [0.28, 0.17, 0.1][ch] * hair + tex;
    }
    let mix = |c: &mut [f64; 3], w: f64, col: [f64; 3]| {
        for ch in 0..3 {
            c[ch] = c[ch] * (1.0 - w) + col[ch] * w;
        }
    };
    for side in [-1.0, 1.0] {
        mix(&mut c, blob(uv, [0.5 + side * 0.07, 0.45], [0.025, 0.02]), [0.12, 0.1, 0.16]);
        mix(&mut c, blob(uv, [0.5 + side * 0.07, 0.4], [0.035, 0.008]), [0.3, 0.2, 0.12]);
    }
    mix(&mut c, blob(uv, [0.5, 0.63], [0.05, 0.014]), [0.72, 0.22, 0.22]);
    c.map(|x| x.clamp(0.02, 0.98))
}

fn binding_uv(rig: &ParametricHeadRig, tri: u32, bary: [f64; 3]) -> [f64; 2] {
    let f = rig.faces[tri as usize];
    let mut uv = [0.0; 2];
    for i in 0..3 {
        for d in 0..2 {
            uv[d] += bary[i] * rig.uv_coords[f[i] as usize][d];
        }
    }
    uv
}

/// Hand-set blendshapes: mouth opening, brow raise, smile, and a global
/// flush, each localized on the face.
fn ground_truth_delta(k: usize, uv: [f64; 2]) -> ([f64; 3], [f64; 4], [f64; 3]) {
    let mouth = blob(uv, [0.5, 0.63], [0.07, 0.03]);
    let brows = blob(uv, [0.43, 0.4], [0.04, 0.03]) + blob(uv, [0.57, 0.4], [0.04, 0.03]);
    let cheeks = blob(uv, [0.4, 0.55], [0.05, 0.05]) + blob(uv, [0.6, 0.55], [0.05, 0.05]);
    let face = blob(uv, [0.5, 0.52], [0.15, 0.15]);
    match k % 4 {
        0 => ([0.0, 0.012 * mouth, -0.04 * mouth], [0.0; 4], [-1.5 * mouth, -1.2 * mouth, -1.0 * mouth]),
        1 => ([0.0, -0.01 * brows, 0.02 * brows], [0.0, 0.1 * brows, 0.0, 0.0], [-0.5 * brows; 3]),
        2 => ([0.008 * (uv[0] - 0.5) * cheeks * 10.0, 0.0, 0.01 * cheeks], [0.0; 4], [0.8 * cheeks, -0.3 * cheeks, -0.3 * cheeks]),
        _ => ([0.0, 0.0, 0.005 * face], [0.0, 0.0, 0.05 * face, 0.0], [0.4 * face, -0.1 * face, 0.2 * face]),
    }
}

/// Sinusoidal trajectories; frame 0 is the neutral pose and expression.
fn trajectories(config: &SynthConfig, rig: &ParametricHeadRig, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let ne = rig.num_expressions();
    let specs: Vec<(f64, f64)> = (0..ne)
        .map(|_| {
            (
                config.expression_amplitude * rng.gen_range(0.6..1.0),
                rng.gen_range(30.0..90.0),
            )
        })
        .collect();
    (0..config.frames)
        .map(|t| {
            let t = t as f64;
            let mut theta: Vec<f64> = specs
                .iter()
                .map(|&(a, period)| a * (2.0 * PI * t / period).sin())
                .collect();
            if rig.pose_dim == 3 {
                let y = config.yaw_amplitude;
                theta.push(0.4 * y * (2.0 * PI * t / 75.0).sin());
                theta.push(y * (2.0 * PI * t / 120.0).sin());
                theta.push(0.2 * y * (2.0 * PI * t / 95.0).sin());
            }
            theta
        })
        .collect()
}

fn ground_truth_model(
    config: &SynthConfig,
    rig: &ParametricHeadRig,
    thetas: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
) -> Result<AvatarModel> {
    let (bindings, _) = bind_gaussians(rig, config.uv_resolution)?;
    let n = bindings.len();
    let spacing = (rig.surface_area() / n as f64).sqrt();
    let mut base = GaussianSet::zeros(n);
    let mut deltas = vec![GaussianDelta::zeros(n); config.blendshapes];
    for i in 0..n {
        let uv = binding_uv(rig, bindings.triangle[i], bindings.barycentric[i]);
        base.position[i] = [0.0, 0.0, rng.gen_range(-0.2..0.2) * spacing];
        let q = [1.0, rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(-0.3..0.3)];
        let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        base.rotation[i] = q.map(|v| v / norm);
        base.scale[i] = [
            (spacing * rng.gen_range(0.55..0.8)).ln(),
            (spacing * rng.gen_range(0.55..0.8)).ln(),
            (spacing * 0.3).ln(),
        ];
        base.opacity[i] = logit(rng.gen_range(0.88..0.98));
        let c = albedo(uv);
        base.color[i] = c.map(|x| logit((x + rng.gen_range(-0.02..0.02)).clamp(0.01, 0.99)));
        for (k, d) in deltas.iter_mut().enumerate() {
            let (dp, dq, dc) = ground_truth_delta(k, uv);
            d.position[i] = dp;
            d.rotation[i] = dq;
            d.color[i] = dc;
        }
    }

    let mut mlp = MlpWeights::new(rig.param_dim(), config.blendshapes, rng);
    for layer in &mut mlp.layers {
        layer.bias.iter_mut().for_each(|b| *b = 0.0);
        let bound = (3.0 / layer.in_dim as f64).sqrt();
        layer.weight.iter_mut().for_each(|w| *w = rng.gen_range(-bound..bound));
    }
    // Unit RMS for every weight over the sequence.
    let psi: Vec<Vec<f64>> = thetas.iter().map(|t| map_params(&mlp, t)).collect::<Result<_>>()?;
    let last = &mut mlp.layers[2];
    for k in 0..config.blendshapes {
        let rms = (psi.iter().map(|p| p[k] * p[k]).sum::<f64>() / psi.len().max(1) as f64).sqrt();
        if rms > 0.0 {
            for j in 0..last.in_dim {
                last.weight[k * last.in_dim + j] /= rms;
            }
        }
    }
    let model = AvatarModel {
        base,
        deltas,
        mlp,
        bindings,
        driver: Driver::Mlp,
    };
    model.validate()?;
    Ok(model)
}

/// Renders a model with straight alpha: colour is the render over black
/// divided by coverage `1 − T`.
pub fn render_rgba(
    model: &AvatarModel,
    frames: &DeformedFrames,
    theta: &[f64],
    camera: &Camera,
    settings: &RenderSettings,
) -> Result<RgbaImage> {
    let fwd = forward(model, theta, frames, camera, settings, false)?;
    let (img, aux) = rasterize(&fwd.projection, camera, [0.0; 3], settings, false);
    let data = img
        .data
        .iter()
        .zip(&aux.transmittance)
        .map(|(c, t)| {
            let a = 1.0 - t;
            if a <= 0.0 {
                [0.0; 4]
            } else {
                [
                    (c[0] / a).clamp(0.0, 1.0),
                    (c[1] / a).clamp(0.0, 1.0),
                    (c[2] / a).clamp(0.0, 1.0),
                    a,
                ]
            }
        })
        .collect();
    Ok(RgbaImage {
        width: camera.width,
        height: camera.height,
        data,
    })
}

/// Rounds every channel to 8 bits, as stored on disk.
pub fn quantize_image(image: &RgbaImage) -> RgbaImage {
    RgbaImage {
        data: image
            .data
            .iter()
            .map(|p| p.map(|v| crate::io::quantize(v) as f64 / 255.0))
            .collect(),
        ..image.clone()
    }
}

pub fn synth_camera(config: &SynthConfig) -> Camera {
    Camera::looking_at_origin(
        config.camera_distance,
        config.focal_factor * config.size as f64,
        config.size,
        config.size,
    )
}

pub fn synth_generate(config: &SynthConfig) -> Result<SynthOutput> {
    if config.frames == 0 || config.size == 0 || config.blendshapes == 0 {
        return Err(Error::Config(
            "frames, size and blendshapes must all be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let rig = ParametricHeadRig::synthetic(&config.rig);
    let thetas = trajectories(config, &rig, &mut rng);
    let ground_truth = ground_truth_model(config, &rig, &thetas, &mut rng)?;
    let camera = synth_camera(config);
    let settings = RenderSettings::default();
    let frames = thetas
        .into_iter()
        .map(|theta| {
            let deformed = DeformedFrames::from_params(&rig, &theta)?;
            let image = render_rgba(&ground_truth, &deformed, &theta, &camera, &settings)?;
            Ok(Frame {
                theta,
                image: quantize_image(&image),
            })
        })
        .collect::<Result<_>>()?;
    Ok(SynthOutput {
        dataset: SequenceDataset { rig, camera, frames },
        ground_truth,
    })
}

pub const GROUND_TRUTH_FILE: &str = "ground_truth.bin";

/// Writes the sequence plus the hidden ground-truth model.
pub fn save_synthetic(dir: &Path, out: &SynthOutput) -> Result<()> {
    save_sequence(dir, &out.dataset)?;
    let mut state = ColorInitState::new(out.ground_truth.num_gaussians());
    state.visited.iter_mut().for_each(|v| *v = true);
    save_model(&dir.join(GROUND_TRUTH_FILE), &out.ground_truth, &state)
}
