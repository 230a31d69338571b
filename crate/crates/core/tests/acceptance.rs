//! End-to-end acceptance suite. Runs every criterion, prints one PASS/FAIL
//! line each, and exits non-zero if any failed. Pass criterion numbers as
//! arguments to run a subset, e.g. `cargo test --test acceptance -- 3 5`.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::time::Instant;

use blendsplat::avatar::{blend, AvatarModel, Driver, MlpWeights};
use blendsplat::color_init::{apply_color_init, estimate_colors, ColorInitState, DEFAULT_THRESHOLD};
use blendsplat::experiments::{
    batching_throughput, color_init_ablation, sampling_ablation, ThroughputSetup, SAMPLING_VARIANTS,
};
use blendsplat::gaussian::{GaussianDelta, GaussianSet};
use blendsplat::io::{encode_model, load_model, save_model};
use blendsplat::math::{axis_angle_matrix, matrix_to_quat, quat_mul, vec3, Mat3, Vec3};
use blendsplat::mesh::{tbn, DeformedFrames, GaussianBindings, Mesh};
use blendsplat::online::{run_online, Ingest, OnlineConfig, SamplePools};
use blendsplat::render::{
    rasterize, render_batch, BatchScheduler, Camera, Image, RenderItem, RenderSettings, Scheme,
};
use blendsplat::synth::{synth_generate, SynthConfig, SynthOutput};
use blendsplat::train::{evaluate, forward, train_offline, MetricRecord, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: String) -> Outcome {
    Outcome { ok, detail }
}

/// State shared between the end-to-end criteria.
#[derive(Default)]
struct Context {
    synth: Option<SynthOutput>,
    offline_psnr: Option<f64>,
}

impl Context {
    /// 200 frames at 64×64 with four ground-truth blendshapes.
    fn synth(&mut self) -> &SynthOutput {
        self.synth
            .get_or_insert_with(|| synth_generate(&SynthConfig::default()).expect("synthetic sequence"))
    }

    fn split(&mut self) -> (Vec<usize>, Vec<usize>) {
        let (train, test) = self.synth().dataset.split();
        (train.collect(), test.collect())
    }
}

fn end_to_end_config() -> TrainConfig {
    TrainConfig {
        steps: 2000,
        blendshapes: 8,
        ..TrainConfig::default()
    }
}

// 1. Full-chain gradients against central differences.
fn gradients(_: &mut Context) -> Outcome {
    let scenes = 24;
    let mut worst = 0.0f64;
    let mut abs = 0.0f64;
    let mut checked = 0;
    for seed in 0..scenes {
        let n = 2 + (seed as usize % 7);
        let k = 1 + (seed as usize % 4);
        let check = common::full_chain_grad_check(1000 + seed, n, k);
        worst = worst.max(check.max_rel_err);
        abs = abs.max(check.max_abs_diff);
        checked += check.checked;
    }
    outcome(
        worst < 1e-3,
        format!("{scenes} scenes, {checked} scalars, max rel err {worst:.2e} (floor 1e-8), max abs diff {abs:.2e}"),
    )
}

fn random_motion(rng: &mut ChaCha8Rng) -> (Mat3, Vec3) {
    let aa: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-3.0..3.0));
    let t = Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
    (axis_angle_matrix(aa), t)
}

fn quat_distance(a: [f64; 4], b: [f64; 4]) -> f64 {
    let d = |s: f64| (0..4).map(|i| (a[i] - s * b[i]).powi(2)).sum::<f64>().sqrt();
    d(1.0).min(d(-1.0))
}

// 2. TBN reconstruction identities and rigid-motion equivariance.
fn tbn_transform(_: &mut Context) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut tested, mut worst_edge, mut worst_norm, mut worst_orth, mut worst_rot) = (0, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    while tested < 1000 {
        let v: [Vec3; 3] = std::array::from_fn(|_| {
            Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let uv: [[f64; 2]; 3] = std::array::from_fn(|_| [rng.gen(), rng.gen()]);
        let det = (uv[1][0] - uv[0][0]) * (uv[2][1] - uv[0][1]) - (uv[2][0] - uv[0][0]) * (uv[1][1] - uv[0][1]);
        let (e1, e2) = (v[1] - v[0], v[2] - v[0]);
        if det.abs() < 1e-3 || e1.cross(&e2).norm() < 1e-3 {
            continue;
        }
        tested += 1;
        let r = tbn(0, v, uv).unwrap();
        let (t, b, n): (Vec3, Vec3, Vec3) = (r.column(0).into(), r.column(1).into(), r.column(2).into());
        let m = [[uv[1][0] - uv[0][0], uv[2][0] - uv[0][0]], [uv[1][1] - uv[0][1], uv[2][1] - uv[0][1]]];
        worst_edge = worst_edge
            .max((e1 - (t * m[0][0] + b * m[1][0])).norm() / e1.norm())
            .max((e2 - (t * m[0][1] + b * m[1][1])).norm() / e2.norm());
        worst_norm = worst_norm.max((n.norm() - 1.0).abs());
        worst_orth = worst_orth.max(n.dot(&e1).abs()).max(n.dot(&e2).abs());

        let (q, shift) = random_motion(&mut rng);
        let moved = tbn(0, v.map(|p| q * p + shift), uv).unwrap();
        worst_rot = worst_rot.max((moved - q * r).abs().max());
    }

    // Whole-mesh equivariance of the tangent-to-world transform.
    let rig = common::tiny_rig();
    let mut worst_pos = 0.0f64;
    let mut worst_quat = 0.0f64;
    for trial in 0..20 {
        let mut mrng = ChaCha8Rng::seed_from_u64(200 + trial);
        let model = common::micro_model(&rig, 40, 1, &mut mrng);
        let theta = common::random_theta(&rig, &mut mrng);
        let mesh = rig.evaluate(&theta).unwrap();
        let tangent = blendsplat::avatar::activate(&model.base).unwrap();
        let world = DeformedFrames::new(&rig, &mesh).unwrap().transform(&tangent, &model.bindings).unwrap();
        let (q, shift) = random_motion(&mut mrng);
        let moved_mesh = Mesh {
            vertices: mesh.vertices.iter().map(|p| blendsplat::math::arr3(&(q * vec3(*p) + shift))).collect(),
        };
        let moved = DeformedFrames::new(&rig, &moved_mesh)
            .unwrap()
            .transform(&tangent, &model.bindings)
            .unwrap();
        let qq = matrix_to_quat(&q);
        for i in 0..world.len() {
            let expect = q * vec3(world.position[i]) + shift;
            worst_pos = worst_pos.max((vec3(moved.position[i]) - expect).norm());
            worst_quat = worst_quat.max(quat_distance(moved.rotation[i], quat_mul(qq, world.rotation[i])));
        }
    }
    let ok = worst_edge <= 1e-6
        && worst_norm <= 1e-9
        && worst_orth <= 1e-6
        && worst_rot <= 1e-9
        && worst_pos <= 1e-9
        && worst_quat <= 1e-6;
    outcome(
        ok,
        format!(
            "{tested} triangles: edge {worst_edge:.1e}, |N|-1 {worst_norm:.1e}, N·e {worst_orth:.1e}, QR {worst_rot:.1e}; \
             mesh motion: position {worst_pos:.1e}, rotation {worst_quat:.1e}"
        ),
    )
}

fn random_blend_model(rng: &mut ChaCha8Rng) -> AvatarModel {
    let n = rng.gen_range(1..60);
    let k = rng.gen_range(1..10);
    let mut base = GaussianSet::zeros(n);
    for s in base.scalars_mut() {
        *s = rng.gen_range(-3.0..3.0);
    }
    let deltas = (0..k)
        .map(|_| {
            let mut d = GaussianDelta::zeros(n);
            for s in d.scalars_mut() {
                *s = rng.gen_range(-1.0..1.0);
            }
            d
        })
        .collect();
    AvatarModel {
        base,
        deltas,
        mlp: MlpWeights::zeros(3, 4, k),
        bindings: GaussianBindings {
            triangle: vec![0; n],
            barycentric: vec![[1.0 / 3.0; 3]; n],
        },
        driver: Driver::Mlp,
    }
}

/// Per Gaussian and component: sum of weighted deltas over k, then added to the base.
fn blend_oracle(model: &AvatarModel, psi: &[f64]) -> GaussianSet {
    let mut out = model.base.clone();
    for i in 0..out.len() {
        for c in 0..3 {
            let mut acc = 0.0;
            for k in 0..psi.len() {
                acc += psi[k] * model.deltas[k].position[i][c];
            }
            out.position[i][c] = model.base.position[i][c] + acc;
        }
        for c in 0..4 {
            let mut acc = 0.0;
            for k in 0..psi.len() {
                acc += psi[k] * model.deltas[k].rotation[i][c];
            }
            out.rotation[i][c] = model.base.rotation[i][c] + acc;
        }
        for c in 0..3 {
            let mut acc = 0.0;
            for k in 0..psi.len() {
                acc += psi[k] * model.deltas[k].color[i][c];
            }
            out.color[i][c] = model.base.color[i][c] + acc;
        }
    }
    out
}

fn bits(g: &GaussianSet) -> Vec<u64> {
    g.flatten().iter().map(|v| v.to_bits()).collect()
}

// 3. Linear blending against a double loop, and basis recovery.
fn blending(_: &mut Context) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = 0;
    let mut basis_failures = 0;
    for _ in 0..100 {
        let model = random_blend_model(&mut rng);
        let k = model.num_blendshapes();
        let psi: Vec<f64> = (0..k).map(|_| rng.gen_range(-2.0..2.0)).collect();
        if bits(&blend(&model, &psi).unwrap()) != bits(&blend_oracle(&model, &psi)) {
            mismatches += 1;
        }
        for j in 0..k {
            let mut e = vec![0.0; k];
            e[j] = 1.0;
            let out = blend(&model, &e).unwrap();
            let d = &model.deltas[j];
            let b = &model.base;
            let exact = (0..b.len()).all(|i| {
                (0..3).all(|c| out.position[i][c] == b.position[i][c] + d.position[i][c])
                    && (0..4).all(|c| out.rotation[i][c] == b.rotation[i][c] + d.rotation[i][c])
                    && (0..3).all(|c| out.color[i][c] == b.color[i][c] + d.color[i][c])
                    && out.scale[i] == b.scale[i]
                    && out.opacity[i] == b.opacity[i]
            });
            basis_failures += usize::from(!exact);
        }
    }
    outcome(
        mismatches == 0 && basis_failures == 0,
        format!("100 instances: {mismatches} oracle mismatches, {basis_failures} basis-recovery failures"),
    )
}

fn color_camera() -> Camera {
    Camera::looking_at_origin(4.0, 30.0, 24, 24)
}

fn color_settings() -> RenderSettings {
    RenderSettings {
        record_contributions: true,
        ..RenderSettings::default()
    }
}

fn color_render(model: &AvatarModel, rig: &blendsplat::mesh::ParametricHeadRig, bg: [f64; 3]) -> (blendsplat::render::Projection, Image, blendsplat::render::RenderAux) {
    let theta = vec![0.0; rig.param_dim()];
    let frames = common::deformed(rig, &theta);
    let fwd = forward(model, &theta, &frames, &color_camera(), &color_settings(), false).unwrap();
    let (img, aux) = rasterize(&fwd.projection, &color_camera(), bg, &color_settings(), false);
    (fwd.projection, img, aux)
}

// 4. Color initialization estimates, constant images, idempotence.
fn color_init(_: &mut Context) -> Outcome {
    let rig = common::tiny_rig();
    let mut worst_ref = 0.0f64;
    let mut worst_const = 0.0f64;
    let mut worst_render = 0.0f64;
    let mut idempotent = true;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        let mut model = common::micro_model(&rig, 30, 2, &mut rng);
        for d in &mut model.deltas {
            d.color.iter_mut().for_each(|c| *c = [0.0; 3]);
        }
        let (proj, _, aux) = color_render(&model, &rig, [0.0; 3]);

        let target = Image {
            width: 24,
            height: 24,
            data: (0..24 * 24).map(|_| std::array::from_fn(|_| rng.gen())).collect(),
        };
        let est = estimate_colors(&aux, &target, DEFAULT_THRESHOLD).unwrap();
        for (g, (num, den, max_w)) in common::reference_color_sums(&proj, &color_camera(), &target, &color_settings())
            .iter()
            .enumerate()
        {
            worst_ref = worst_ref.max((est.max_weight[g] - max_w).abs());
            if *den > 0.0 {
                for ch in 0..3 {
                    worst_ref = worst_ref.max((est.color[g][ch] - num[ch] / den).abs());
                }
            }
        }
        let mut state = ColorInitState::new(30);
        apply_color_init(&mut model.clone(), &est, &mut state).unwrap();
        let mut again = model.clone();
        let before_second = again.clone();
        idempotent &= apply_color_init(&mut again, &est, &mut state).unwrap() == 0 && again == before_second;

        let c: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.1..0.9));
        let est = estimate_colors(&aux, &Image::filled(24, 24, c), DEFAULT_THRESHOLD).unwrap();
        for g in (0..30).filter(|&g| est.eligible[g]) {
            for ch in 0..3 {
                worst_const = worst_const.max((est.color[g][ch] - c[ch]).abs());
            }
        }
        let mut state = ColorInitState::new(30);
        apply_color_init(&mut model, &est, &mut state).unwrap();
        let (_, img, aux2) = color_render(&model, &rig, c);
        let mut covered = vec![true; 24 * 24];
        for ct in aux2.contributions.as_ref().unwrap() {
            if !state.visited[ct.gaussian as usize] {
                covered[ct.pixel as usize] = false;
            }
        }
        for (p, ok) in img.data.iter().zip(&covered) {
            if *ok {
                for ch in 0..3 {
                    worst_render = worst_render.max((p[ch] - c[ch]).abs());
                }
            }
        }
    }
    outcome(
        worst_ref <= 1e-12 && worst_const <= 1e-12 && worst_render <= 1e-3 && idempotent,
        format!(
            "10 scenes: reference err {worst_ref:.1e}, constant-image err {worst_const:.1e}, \
             re-render err {worst_render:.1e}, idempotent {idempotent}"
        ),
    )
}

// 5. Reservoir acceptance and retention frequencies.
fn reservoir(_: &mut Context) -> Outcome {
    let (cap, stream, trials) = (100usize, 5000usize, 2000u32);
    let local = 1;
    let offered = stream - local;
    let mut accepted = vec![0u32; offered];
    let mut retained = vec![0u32; offered];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..trials {
        let mut pools = SamplePools::new(local, cap);
        for i in 0..stream {
            if matches!(pools.process_frame(i, &mut rng), Ingest::Stored | Ingest::Replaced(_)) {
                accepted[i - local] += 1;
            }
        }
        for &i in &pools.global {
            retained[i] += 1;
        }
    }
    let za = common::bin_z_scores(&accepted, &|j| (cap as f64 / (j + 1) as f64).min(1.0), trials);
    let zr = common::bin_z_scores(&retained, &|_| cap as f64 / offered as f64, trials);
    let over = |z: &[f64]| z.iter().filter(|v| v.abs() > 3.0).count();
    let max = |z: &[f64]| z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let ok = panic::catch_unwind(|| {
        common::check_z_scores(&za, "acceptance");
        common::check_z_scores(&zr, "retention");
    })
    .is_ok();
    outcome(
        ok,
        format!(
            "{trials} trials × {stream} frames, |global| = {cap}: acceptance bins beyond 3σ {}/{} (max |z| {:.2}), \
             retention bins beyond 3σ {}/{} (max |z| {:.2})",
            over(&za),
            za.len(),
            max(&za),
            over(&zr),
            zr.len(),
            max(&zr)
        ),
    )
}

fn scheduler_scenes(n: usize, count: usize) -> Vec<GaussianSet> {
    (0..count)
        .map(|i| blendsplat::experiments::random_scene(n, 60 + i as u64))
        .collect()
}

// 6a. Batch scheduler synchronization count and worker-count independence.
fn scheduler_contract(_: &mut Context) -> Outcome {
    let camera = Camera::looking_at_origin(4.0, 80.0, 64, 64);
    let scenes = scheduler_scenes(2000, 5);
    let items: Vec<RenderItem> = scenes
        .iter()
        .enumerate()
        .map(|(i, g)| RenderItem {
            world: g,
            camera,
            background: [0.1 * i as f64, 0.5, 0.9],
        })
        .collect();
    let settings = RenderSettings::default();
    let mut reference: Option<Vec<Vec<u64>>> = None;
    let mut identical = true;
    let mut two_stage_syncs = Vec::new();
    for scheme in Scheme::ALL {
        for workers in [1, 2, 8] {
            let sched = BatchScheduler::new(workers, scheme).unwrap();
            let out = render_batch(&sched, &items, &settings).unwrap();
            if scheme == Scheme::TwoStage {
                two_stage_syncs.push(sched.sync_count());
            }
            let img_bits: Vec<Vec<u64>> = out
                .iter()
                .map(|(img, _)| img.data.iter().flatten().map(|v| v.to_bits()).collect())
                .collect();
            match &reference {
                None => reference = Some(img_bits),
                Some(r) => identical &= *r == img_bits,
            }
        }
    }
    outcome(
        identical && two_stage_syncs.iter().all(|&s| s == 1),
        format!(
            "two-stage syncs per batch {two_stage_syncs:?}; images bitwise identical across schemes and workers {{1, 2, 8}}: {identical}"
        ),
    )
}

// 6b. Two-stage throughput against sequential and naive parallel.
fn scheduler_throughput(_: &mut Context) -> Outcome {
    let setup = ThroughputSetup::default();
    let rows = batching_throughput(&setup).unwrap();
    let rate = |s: Scheme| rows.iter().find(|r| r.scheme == s).unwrap().images_per_sec;
    let (seq, naive, two) = (rate(Scheme::Sequential), rate(Scheme::NaiveParallel), rate(Scheme::TwoStage));
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    outcome(
        two >= 2.0 * seq && two >= naive,
        format!(
            "N = {}, {}×{}, {} workers on {cores} core(s): sequential {seq:.2}, naive {naive:.2}, two-stage {two:.2} images/s ({:.2}× sequential)",
            setup.gaussians, setup.size, setup.size, setup.workers, two / seq
        ),
    )
}

// 7. Synthetic end-to-end quality and the reduced-blendshape ablation.
fn end_to_end(ctx: &mut Context) -> Outcome {
    let (train, test) = ctx.split();
    let data = &ctx.synth().dataset;
    let mut psnr = [0.0; 2];
    for (slot, driver) in [Driver::Mlp, Driver::IdentitySlice].into_iter().enumerate() {
        let cfg = TrainConfig {
            driver,
            ..end_to_end_config()
        };
        let out = train_offline(data, &train, &cfg).unwrap();
        psnr[slot] = evaluate(&out.model, data, &test, &cfg.render).unwrap().mean_psnr;
    }
    ctx.offline_psnr = Some(psnr[0]);
    outcome(
        psnr[0] >= 30.0 && psnr[0] > psnr[1],
        format!(
            "K = 8, 2000 steps, {} held-out frames: MLP mapping {:.2} dB, identity slice {:.2} dB",
            test.len(),
            psnr[0],
            psnr[1]
        ),
    )
}

// 8. Streaming versus offline, and forgetting without the global pool.
fn online(ctx: &mut Context) -> Outcome {
    let (train, test) = ctx.split();
    let offline = match ctx.offline_psnr {
        Some(p) => p,
        None => {
            let data = &ctx.synth().dataset;
            let out = train_offline(data, &train, &end_to_end_config()).unwrap();
            evaluate(&out.model, data, &test, &RenderSettings::default()).unwrap().mean_psnr
        }
    };
    let data = &ctx.synth().dataset;
    let stream_cfg = OnlineConfig {
        train: end_to_end_config(),
        steps_per_frame: 12,
        ..OnlineConfig::default()
    };
    let out = run_online(data, &train, &stream_cfg).unwrap();
    let online = evaluate(&out.model, data, &test, &RenderSettings::default()).unwrap().mean_psnr;

    // Short pools and few steps per frame make forgetting visible within one pass.
    let forgetting_cfg = OnlineConfig {
        train: end_to_end_config(),
        local_capacity: 25,
        global_capacity: 100,
        steps_per_frame: 4,
        ..OnlineConfig::default()
    };
    let rows = sampling_ablation(data, &forgetting_cfg, &SAMPLING_VARIANTS[..2], &[0, 1, 2]).unwrap();
    let gaps: Vec<(f64, f64)> = rows.chunks(2).map(|r| (r[0].early_mean_gap, r[1].early_mean_gap)).collect();
    let wins = gaps.iter().filter(|(full, no_global)| no_global > full).count();
    outcome(
        online >= offline - 1.0 && wins >= 2,
        format!(
            "offline {offline:.2} dB, online ({} frames × {} steps) {online:.2} dB; early forgetting gap full vs w/o global: {}; w/o global larger in {wins}/3",
            train.len(),
            stream_cfg.steps_per_frame,
            gaps.iter()
                .map(|(a, b)| format!("{a:.4} vs {b:.4}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    )
}

// 9. Color initialization speeds up early convergence.
fn color_init_speed(ctx: &mut Context) -> Outcome {
    let data = &ctx.synth().dataset;
    let cfg = TrainConfig {
        steps: 300,
        blendshapes: 8,
        ..TrainConfig::default()
    };
    let rows = color_init_ablation(data, &cfg, &[0, 1, 2], 0.05, 5).unwrap();
    let wins = rows.iter().filter(|r| r.faster_with_init()).count();
    let fmt = |s: Option<usize>| s.map_or("never".to_string(), |v| v.to_string());
    outcome(
        wins >= 2,
        format!(
            "steps to L1 0.05 (with vs without): {}; faster in {wins}/3",
            rows.iter()
                .map(|r| format!("{} vs {}", fmt(r.steps_with), fmt(r.steps_without)))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    )
}

fn log_bits(log: &[MetricRecord]) -> Vec<(usize, u64)> {
    log.iter().map(|r| (r.step, r.loss.to_bits())).collect()
}

// 10. Model file round trip and worker-count determinism.
fn serialization(_: &mut Context) -> Outcome {
    let data = synth_generate(&SynthConfig {
        frames: 12,
        size: 32,
        uv_resolution: 16,
        ..SynthConfig::default()
    })
    .unwrap()
    .dataset;
    let frames: Vec<usize> = (0..12).collect();
    let mut logs = Vec::new();
    let mut models = Vec::new();
    for workers in [1, 2, 8] {
        let cfg = TrainConfig {
            steps: 15,
            blendshapes: 4,
            uv_resolution: 16,
            workers,
            seed: 10,
            ..TrainConfig::default()
        };
        let out = train_offline(&data, &frames, &cfg).unwrap();
        logs.push(log_bits(&out.log));
        models.push((out.model, out.color_state));
    }
    let logs_equal = logs.windows(2).all(|w| w[0] == w[1]);
    let models_equal = models.windows(2).all(|w| w[0].0 == w[1].0);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    let (model, state) = &models[0];
    save_model(&path, model, state).unwrap();
    let (loaded, loaded_state) = load_model(&path).unwrap();
    let round_trip = encode_model(&loaded, &loaded_state).unwrap() == std::fs::read(&path).unwrap()
        && loaded == *model
        && loaded_state.visited == state.visited;
    outcome(
        logs_equal && models_equal && round_trip,
        format!(
            "metric logs identical across workers {{1, 2, 8}}: {logs_equal}; models identical: {models_equal}; bitwise round trip: {round_trip}"
        ),
    )
}

type Criterion = (&'static str, &'static str, f64, fn(&mut Context) -> Outcome);

const CRITERIA: [Criterion; 11] = [
    ("1", "full-chain gradients", 120.0, gradients),
    ("2", "TBN and transform", 10.0, tbn_transform),
    ("3", "blending oracle", 5.0, blending),
    ("4", "color-init oracle", 10.0, color_init),
    ("5", "reservoir statistics", 60.0, reservoir),
    ("6", "batch scheduler contract", 180.0, scheduler_contract),
    ("6", "batch scheduler throughput", 180.0, scheduler_throughput),
    ("7", "synthetic end-to-end", 900.0, end_to_end),
    ("8", "online vs offline", 1200.0, online),
    ("9", "color-init convergence", 600.0, color_init_speed),
    ("10", "serialization and determinism", 60.0, serialization),
];

fn main() {
    let wanted: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| a.parse::<usize>().is_ok())
        .collect();
    panic::set_hook(Box::new(|_| {}));
    let mut ctx = Context::default();
    let mut failed = 0;
    for (id, name, budget, run) in CRITERIA {
        if !wanted.is_empty() && !wanted.iter().any(|w| w == id) {
            continue;
        }
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(|| run(&mut ctx)));
        let secs = start.elapsed().as_secs_f64();
        let (ok, detail) = match result {
            Ok(o) => (o.ok && secs < budget, o.detail),
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {} {name}: {detail} [{secs:.1}s of {budget:.0}s]",
            if ok { "PASS" } else { "FAIL" }
        );
    }
    if failed > 0 {
        println!("{failed} acceptance check(s) failed");
        std::process::exit(1);
    }
}
