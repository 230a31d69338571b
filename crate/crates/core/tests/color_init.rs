mod common;

use blendsplat::avatar::AvatarModel;
use blendsplat::color_init::{apply_color_init, estimate_colors, ColorEstimate, ColorInitState, DEFAULT_THRESHOLD};
use blendsplat::gaussian::{logit, sigmoid};
use blendsplat::render::{rasterize, Camera, Image, Projection, RenderAux, RenderSettings};
use blendsplat::train::forward;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn camera() -> Camera {
    Camera::looking_at_origin(4.0, 30.0, 24, 24)
}

fn recording() -> RenderSettings {
    RenderSettings {
        record_contributions: true,
        ..RenderSettings::default()
    }
}

fn scene(seed: u64, n: usize) -> (AvatarModel, Projection, RenderAux) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rig = common::tiny_rig();
    let model = common::micro_model(&rig, n, 2, &mut rng);
    let (proj, aux) = project(&model, &rig);
    (model, proj, aux)
}

fn project(model: &AvatarModel, rig: &blendsplat::mesh::ParametricHeadRig) -> (Projection, RenderAux) {
    let theta = vec![0.0; rig.param_dim()];
    let frames = common::deformed(rig, &theta);
    let fwd = forward(model, &theta, &frames, &camera(), &recording(), false).unwrap();
    let (_, aux) = rasterize(&fwd.projection, &camera(), [0.0; 3], &recording(), false);
    (fwd.projection, aux)
}

fn random_image(rng: &mut ChaCha8Rng) -> Image {
    Image {
        width: 24,
        height: 24,
        data: (0..24 * 24).map(|_| std::array::from_fn(|_| rng.gen())).collect(),
    }
}

#[test]
fn estimates_match_scalar_reference() {
    for seed in 0..4 {
        let (_, proj, aux) = scene(seed, 25);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let target = random_image(&mut rng);
        let est = estimate_colors(&aux, &target, DEFAULT_THRESHOLD).unwrap();
        let reference = common::reference_color_sums(&proj, &camera(), &target, &recording());
        let mut eligible = 0;
        for (g, (num, den, max_w)) in reference.iter().enumerate() {
            assert!((est.max_weight[g] - max_w).abs() < 1e-12);
            assert_eq!(est.eligible[g], *max_w > DEFAULT_THRESHOLD);
            if *den > 0.0 {
                for ch in 0..3 {
                    assert!((est.color[g][ch] - num[ch] / den).abs() < 1e-12);
                }
            }
            eligible += est.eligible[g] as usize;
        }
        assert!(eligible > 0);
    }
}

fn single_estimate(color: [f64; 3]) -> ColorEstimate {
    ColorEstimate {
        color: vec![color],
        eligible: vec![true],
        max_weight: vec![0.5],
    }
}

fn one_gaussian_model() -> AvatarModel {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    common::micro_model(&common::tiny_rig(), 1, 1, &mut rng)
}

#[test]
fn mid_grey_maps_to_zero_logit() {
    let mut model = one_gaussian_model();
    let mut state = ColorInitState::new(1);
    assert_eq!(apply_color_init(&mut model, &single_estimate([0.5; 3]), &mut state).unwrap(), 1);
    assert_eq!(model.base.color[0], [0.0; 3]);
}

#[test]
fn saturated_colors_are_clamped_to_finite_logits() {
    let mut model = one_gaussian_model();
    let mut state = ColorInitState::new(1);
    apply_color_init(&mut model, &single_estimate([1.0, 0.0, 0.25]), &mut state).unwrap();
    let c = model.base.color[0];
    assert!(c.iter().all(|v| v.is_finite()));
    assert!((c[0] - logit(1.0 - 1e-4)).abs() < 1e-12);
    assert!((c[1] - logit(1e-4)).abs() < 1e-12);
    assert!((sigmoid(c[2]) - 0.25).abs() < 1e-12);
}

#[test]
fn second_application_is_a_no_op() {
    let (mut model, _, aux) = scene(5, 25);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let est = estimate_colors(&aux, &random_image(&mut rng), DEFAULT_THRESHOLD).unwrap();
    let mut state = ColorInitState::new(25);
    let first = apply_color_init(&mut model, &est, &mut state).unwrap();
    assert!(first > 0);
    assert_eq!(state.num_visited(), first);
    let snapshot = model.clone();
    let other = estimate_colors(&aux, &random_image(&mut rng), DEFAULT_THRESHOLD).unwrap();
    assert_eq!(apply_color_init(&mut model, &other, &mut state).unwrap(), 0);
    assert_eq!(model, snapshot);
}

#[test]
fn constant_target_is_reproduced() {
    let c = [0.2, 0.55, 0.9];
    let rig = common::tiny_rig();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut model = common::micro_model(&rig, 30, 2, &mut rng);
    // Fresh blendshapes, so the rendered color is the base color.
    for d in &mut model.deltas {
        d.color.iter_mut().for_each(|c| *c = [0.0; 3]);
    }
    let (_, aux) = project(&model, &rig);
    let target = Image::filled(24, 24, c);
    let est = estimate_colors(&aux, &target, DEFAULT_THRESHOLD).unwrap();
    for g in 0..30 {
        if est.eligible[g] {
            for ch in 0..3 {
                assert!((est.color[g][ch] - c[ch]).abs() < 1e-12);
            }
        }
    }
    let mut state = ColorInitState::new(30);
    apply_color_init(&mut model, &est, &mut state).unwrap();

    // Pixels whose every contributor was initialized reproduce the target.
    let (proj, aux2) = project(&model, &rig);
    let (img, _) = rasterize(&proj, &camera(), c, &RenderSettings::default(), false);
    let mut covered = vec![true; 24 * 24];
    for ct in aux2.contributions.as_ref().unwrap() {
        if !state.visited[ct.gaussian as usize] {
            covered[ct.pixel as usize] = false;
        }
    }
    let mut checked = 0;
    for (p, ok) in img.data.iter().zip(&covered) {
        if *ok {
            checked += 1;
            for ch in 0..3 {
                assert!((p[ch] - c[ch]).abs() < 1e-3, "{p:?}");
            }
        }
    }
    assert!(checked > 24 * 24 / 2);
}
