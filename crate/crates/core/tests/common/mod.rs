#![allow(dead_code)]

use blendsplat::avatar::{AvatarModel, Driver, MlpWeights};
use blendsplat::gaussian::{GaussianDelta, GaussianSet};
use blendsplat::mesh::{DeformedFrames, GaussianBindings, HeadRigConfig, ParametricHeadRig};
use blendsplat::render::{Camera, Image, Projection, RenderSettings, RgbaImage};
use blendsplat::train::{frame_loss, frame_loss_and_grads, model_scalars_mut, render_model, FrameInput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Coarse rig with five expressions and a 3-DoF pose (eight parameters).
pub fn tiny_rig() -> ParametricHeadRig {
    ParametricHeadRig::synthetic(&HeadRigConfig {
        segments: 8,
        rings: 5,
        expressions: 5,
        expression_amplitude: 0.1,
        ..HeadRigConfig::default()
    })
}

/// Faces whose centroid points towards the camera at +z.
pub fn front_faces(rig: &ParametricHeadRig) -> Vec<u32> {
    (0..rig.faces.len() as u32)
        .filter(|&f| {
            let z: f64 = rig.faces[f as usize]
                .iter()
                .map(|&v| rig.base_vertices[v as usize][2])
                .sum();
            z > 1.0
        })
        .collect()
}

fn random_unit_quat(rng: &mut ChaCha8Rng) -> [f64; 4] {
    let q: [f64; 4] = [1.0, rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    q.map(|v| v / n)
}

/// Small model with every parameter group non-trivial: random base,
/// random deltas and a random MLP including the output layer.
pub fn micro_model(rig: &ParametricHeadRig, n: usize, k: usize, rng: &mut ChaCha8Rng) -> AvatarModel {
    let faces = front_faces(rig);
    let mut bindings = GaussianBindings::default();
    for _ in 0..n {
        bindings.triangle.push(faces[rng.gen_range(0..faces.len())]);
        let a: f64 = rng.gen_range(0.1..0.8);
        let b: f64 = rng.gen_range(0.05..(0.95 - a));
        bindings.barycentric.push([a, b, 1.0 - a - b]);
    }
    let mut base = GaussianSet::zeros(n);
    for i in 0..n {
        base.position[i] = std::array::from_fn(|_| rng.gen_range(-0.05..0.05));
        base.rotation[i] = random_unit_quat(rng).map(|v| v * rng.gen_range(0.8..1.2));
        base.scale[i] = std::array::from_fn(|_| rng.gen_range(0.15f64..0.4).ln());
        base.opacity[i] = rng.gen_range(-1.0..2.0);
        base.color[i] = std::array::from_fn(|_| rng.gen_range(-2.0..2.0));
    }
    let deltas = (0..k)
        .map(|_| {
            let mut d = GaussianDelta::zeros(n);
            for i in 0..n {
                d.position[i] = std::array::from_fn(|_| rng.gen_range(-0.05..0.05));
                d.rotation[i] = std::array::from_fn(|_| rng.gen_range(-0.1..0.1));
                d.color[i] = std::array::from_fn(|_| rng.gen_range(-0.5..0.5));
            }
            d
        })
        .collect();
    let mut mlp = MlpWeights::new(rig.param_dim(), k, rng);
    for l in &mut mlp.layers {
        l.bias.iter_mut().for_each(|b| *b = rng.gen_range(-0.2..0.2));
    }
    let bound = 1.0 / (mlp.hidden_dim() as f64).sqrt();
    mlp.layers[2]
        .weight
        .iter_mut()
        .for_each(|w| *w = rng.gen_range(-bound..bound));
    AvatarModel {
        base,
        deltas,
        mlp,
        bindings,
        driver: Driver::Mlp,
    }
}

pub fn random_theta(rig: &ParametricHeadRig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut t: Vec<f64> = (0..rig.param_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let ne = rig.num_expressions();
    for v in &mut t[ne..] {
        *v *= 0.2;
    }
    t
}

pub fn random_rgba(w: u32, h: u32, rng: &mut ChaCha8Rng) -> RgbaImage {
    RgbaImage {
        width: w,
        height: h,
        data: (0..w * h).map(|_| std::array::from_fn(|_| rng.gen())).collect(),
    }
}

pub fn micro_camera() -> Camera {
    Camera::looking_at_origin(4.0, 10.0, 8, 8)
}

pub fn deformed(rig: &ParametricHeadRig, theta: &[f64]) -> DeformedFrames {
    DeformedFrames::from_params(rig, theta).unwrap()
}

pub struct GradCheck {
    pub max_rel_err: f64,
    pub max_abs_diff: f64,
    pub checked: usize,
    pub worst: usize,
}

/// Central differences of the full-chain L1 loss against the analytic
/// gradient for every trainable scalar of a random micro scene.
pub fn full_chain_grad_check(seed: u64, n: usize, k: usize) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rig = tiny_rig();
    let model = micro_model(&rig, n, k, &mut rng);
    let theta = random_theta(&rig, &mut rng);
    let frames = deformed(&rig, &theta);
    let camera = micro_camera();
    let background: [f64; 3] = std::array::from_fn(|_| rng.gen());
    let settings = RenderSettings::untruncated();
    // L1 has a kink wherever a residual is zero; keep every residual clear
    // of it so central differences see a smooth loss.
    let pred = render_model(&model, &frames, &theta, &camera, background, &settings).unwrap();
    let target = loop {
        let t = random_rgba(8, 8, &mut rng);
        let composite = t.over(background);
        let margin = pred
            .data
            .iter()
            .zip(&composite.data)
            .flat_map(|(a, b)| (0..3).map(move |c| (a[c] - b[c]).abs()))
            .fold(f64::INFINITY, f64::min);
        if margin >= 1e-3 {
            break t;
        }
    };
    let input = FrameInput {
        theta: &theta,
        frames: &frames,
        target: &target,
        background,
    };
    let analytic = frame_loss_and_grads(&model, &camera, &input, &settings)
        .unwrap()
        .grads
        .flatten();
    let h = 1e-5;
    let mut m = model.clone();
    let mut worst = (0.0f64, 0);
    let mut max_abs = 0.0f64;
    for idx in 0..analytic.len() {
        let orig = *model_scalars_mut(&mut m).nth(idx).unwrap();
        *model_scalars_mut(&mut m).nth(idx).unwrap() = orig + h;
        let lp = frame_loss(&m, &camera, &input, &settings).unwrap();
        *model_scalars_mut(&mut m).nth(idx).unwrap() = orig - h;
        let lm = frame_loss(&m, &camera, &input, &settings).unwrap();
        *model_scalars_mut(&mut m).nth(idx).unwrap() = orig;
        let fd = (lp - lm) / (2.0 * h);
        let a = analytic[idx];
        let diff = (fd - a).abs();
        max_abs = max_abs.max(diff);
        let rel = if diff < 1e-8 { 0.0 } else { diff / fd.abs().max(a.abs()) };
        if rel > worst.0 {
            worst = (rel, idx);
        }
    }
    GradCheck {
        max_rel_err: worst.0,
        max_abs_diff: max_abs,
        checked: analytic.len(),
        worst: worst.1,
    }
}

/// Per-Gaussian (Σ w·I, Σ w, max w) from a direct front-to-back walk.
pub fn reference_color_sums(proj: &Projection, cam: &Camera, target: &Image, s: &RenderSettings) -> Vec<([f64; 3], f64, f64)> {
    let mut out = vec![([0.0; 3], 0.0, 0.0); proj.num_gaussians];
    for y in 0..cam.height {
        for x in 0..cam.width {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let pixel = target.get(x, y);
            let mut t = 1.0;
            for sp in &proj.splats {
                let (dx, dy) = (px - sp.mean2d[0], py - sp.mean2d[1]);
                if dx.abs() > sp.radius || dy.abs() > sp.radius {
                    continue;
                }
                let q = sp.conic[0] * dx * dx + 2.0 * sp.conic[1] * dx * dy + sp.conic[2] * dy * dy;
                let alpha = sp.opacity * (-0.5 * q).exp();
                if alpha < s.alpha_min {
                    continue;
                }
                let w = alpha * t;
                let e = &mut out[sp.index];
                for ch in 0..3 {
                    e.0[ch] += w * pixel[ch];
                }
                e.1 += w;
                e.2 = f64::max(e.2, w);
                t *= 1.0 - alpha;
            }
        }
    }
    out
}

/// A run of independent 3σ checks is expected to trip about 0.27% of the
/// time; more than this many exceedances out of `n` is a real deviation.
pub fn allowed_exceedances(n: usize) -> usize {
    (n as f64 * 0.0027 + 3.0 * (n as f64 * 0.0027).sqrt()).ceil() as usize
}

/// Z-scores of the Bernoulli hit counts over 50-item bins of the stream.
pub fn bin_z_scores(hits: &[u32], p: &dyn Fn(usize) -> f64, trials: u32) -> Vec<f64> {
    let bin = 50;
    let mut out = Vec::new();
    for start in (0..hits.len()).step_by(bin) {
        let end = (start + bin).min(hits.len());
        let (mut mean, mut var, mut seen) = (0.0, 0.0, 0.0);
        for j in start..end {
            let q = p(j);
            mean += q * trials as f64;
            var += q * (1.0 - q) * trials as f64;
            seen += hits[j] as f64;
        }
        if var == 0.0 {
            assert_eq!(seen, mean, "items {start}..{end}");
        } else {
            out.push((seen - mean) / var.sqrt());
        }
    }
    out
}

pub fn check_z_scores(z: &[f64], what: &str) {
    let over = z.iter().filter(|v| v.abs() > 3.0).count();
    assert!(over <= allowed_exceedances(z.len()), "{what}: {over} of {} beyond 3σ", z.len());
    let mean = z.iter().sum::<f64>() / z.len() as f64;
    assert!(mean.abs() < 3.0 / (z.len() as f64).sqrt(), "{what}: mean z {mean}");
}

