//! Offline optimization: batching, Adam with per-group rates, color init and
//! evaluation metrics.

mod adam;
mod eval;
mod loss;
mod optimizer;
mod step;

pub use adam::{adam_step, AdamState};
pub use eval::{evaluate, psnr, ssim, EvalReport, FrameMetrics, PSNR_CAP};
pub use loss::l1_loss;
pub use optimizer::{Group, LearningRates, Optimizer};
pub use step::{
    backward, forward, frame_loss, frame_loss_and_grads, model_scalars_mut, render_model,
    FrameInput, FrameResult, Forward, ModelGrads,
};

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::avatar::{AvatarModel, Driver, ModelInit};
use crate::color_init::{apply_color_init, ColorEstimate, ColorInitState, DEFAULT_THRESHOLD};
use crate::dataset::SequenceDataset;
use crate::error::{Error, Result};
use crate::mesh::{bind_gaussians, DeformedFrames, ParametricHeadRig};
use crate::render::{BatchScheduler, Camera, RenderSettings, Scheme};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub steps: usize,
    pub lr: LearningRates,
    /// Number of learned blendshapes K.
    pub blendshapes: usize,
    /// Gaussians are bound at the texel centres of a square UV grid of this size.
    pub uv_resolution: usize,
    pub driver: Driver,
    pub color_init: bool,
    pub color_threshold: f64,
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub scheme: Scheme,
    pub init: ModelInit,
    pub render: RenderSettings,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 10,
            steps: 5000,
            lr: LearningRates::default(),
            blendshapes: 20,
            uv_resolution: 32,
            driver: Driver::Mlp,
            color_init: true,
            color_threshold: DEFAULT_THRESHOLD,
            seed: 0,
            workers: 0,
            scheme: Scheme::TwoStage,
            init: ModelInit::default(),
            render: RenderSettings::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.blendshapes == 0 {
            return Err(Error::Config("blendshape count must be at least 1".into()));
        }
        self.lr.validate()
    }

    pub fn resolved_workers(&self) -> usize {
        if self.workers == 0 {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        } else {
            self.workers
        }
    }
}

/// Binds Gaussians to the rig and builds a fresh model from the config.
pub fn initialize_model(rig: &ParametricHeadRig, config: &TrainConfig) -> Result<AvatarModel> {
    let (bindings, _) = bind_gaussians(rig, config.uv_resolution)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    AvatarModel::initialize(rig, bindings, config.blendshapes, config.driver, config.init, &mut rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub step: usize,
    pub loss: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepStats {
    /// Mean loss over the batch.
    pub loss: f64,
    pub item_losses: Vec<f64>,
    pub item_black_l1: Vec<f64>,
    pub colors_initialized: usize,
}

/// Model, optimizer state and worker pool for repeated batch updates.
pub struct Trainer {
    pub model: AvatarModel,
    pub color_state: ColorInitState,
    pub optimizer: Optimizer,
    scheduler: BatchScheduler,
    config: TrainConfig,
    steps_done: usize,
}

impl Trainer {
    pub fn new(model: AvatarModel, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        model.validate()?;
        let scheduler = BatchScheduler::new(config.resolved_workers(), config.scheme)?;
        let mut color_state = ColorInitState::new(model.num_gaussians());
        color_state.threshold = config.color_threshold;
        Ok(Self {
            optimizer: Optimizer::new(&model, config.lr),
            model,
            color_state,
            scheduler,
            config,
            steps_done: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn steps_done(&self) -> usize {
        self.steps_done
    }

    pub fn scheduler(&self) -> &BatchScheduler {
        &self.scheduler
    }

    /// Forward, backward, ordered gradient reduction, one optimizer step,
    /// then color init for Gaussians seen for the first time.
    pub fn step(&mut self, camera: &Camera, items: &[FrameInput<'_>]) -> Result<StepStats> {
        if items.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let color_threshold = (self.config.color_init && !self.color_state.all_visited())
            .then_some(self.color_state.threshold);
        let model = &self.model;
        let settings = &self.config.render;
        let results = self.scheduler.run(
            items,
            |item, par| forward(model, item.theta, item.frames, camera, settings, par),
            |item, fwd, par| backward(model, camera, item, fwd, settings, color_threshold, par),
        )?;

        let mut total = ModelGrads::zeros_like(&self.model);
        for r in &results {
            total.add_assign(&r.grads);
        }
        let inv = 1.0 / items.len() as f64;
        let item_losses: Vec<f64> = results.iter().map(|r| r.loss).collect();
        let loss = item_losses.iter().sum::<f64>() * inv;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                step: self.steps_done,
            });
        }
        total.base.scalars_mut().for_each(|v| *v *= inv);
        for d in &mut total.deltas {
            d.scalars_mut().for_each(|v| *v *= inv);
        }
        total.mlp.scalars_mut().for_each(|v| *v *= inv);
        self.optimizer.step(&mut self.model, &total);

        let mut colors_initialized = 0;
        let estimates: Vec<ColorEstimate> = results.iter().filter_map(|r| r.colors.clone()).collect();
        if let Some(merged) = ColorEstimate::merge(&estimates) {
            colors_initialized = apply_color_init(&mut self.model, &merged, &mut self.color_state)?;
        }
        self.steps_done += 1;
        Ok(StepStats {
            loss,
            item_black_l1: results.iter().map(|r| r.black_l1).collect(),
            item_losses,
            colors_initialized,
        })
    }
}

/// Uniform random background colour in [0, 1]³.
pub fn random_background<R: Rng>(rng: &mut R) -> [f64; 3] {
    [rng.gen(), rng.gen(), rng.gen()]
}

/// Deformed mesh frames for each listed frame of the dataset.
pub fn deform_frames(dataset: &SequenceDataset, frames: &[usize]) -> Result<Vec<DeformedFrames>> {
    frames
        .iter()
        .map(|&i| DeformedFrames::from_params(&dataset.rig, &dataset.frames[i].theta))
        .collect()
}

pub struct TrainOutput {
    pub model: AvatarModel,
    pub color_state: ColorInitState,
    pub log: Vec<MetricRecord>,
}

/// Trains a fresh model on the given frames of `dataset`, sampling `B`
/// frames uniformly with replacement per step.
pub fn train_offline(
    dataset: &SequenceDataset,
    frames: &[usize],
    config: &TrainConfig,
) -> Result<TrainOutput> {
    let model = initialize_model(&dataset.rig, config)?;
    train_model(dataset, frames, config, model)
}

/// Like [`train_offline`] but starting from an existing model.
pub fn train_model(
    dataset: &SequenceDataset,
    frames: &[usize],
    config: &TrainConfig,
    model: AvatarModel,
) -> Result<TrainOutput> {
    if frames.is_empty() || dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(&bad) = frames.iter().find(|&&i| i >= dataset.len()) {
        return Err(Error::Config(format!("frame index {bad} out of range")));
    }
    let deformed = deform_frames(dataset, frames)?;
    let mut trainer = Trainer::new(model, config.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let start = Instant::now();
    let mut log = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let picks: Vec<(usize, [f64; 3])> = (0..config.batch_size)
            .map(|_| (rng.gen_range(0..frames.len()), random_background(&mut rng)))
            .collect();
        let items: Vec<FrameInput> = picks
            .iter()
            .map(|&(j, background)| FrameInput {
                theta: &dataset.frames[frames[j]].theta,
                frames: &deformed[j],
                target: &dataset.frames[frames[j]].image,
                background,
            })
            .collect();
        let stats = trainer.step(&dataset.camera, &items)?;
        log.push(MetricRecord {
            step,
            loss: stats.loss,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }
    Ok(TrainOutput {
        model: trainer.model,
        color_state: trainer.color_state,
        log,
    })
}

/// Trailing moving average; entry `i` averages `values[i+1-window ..= i]`
/// (fewer at the start).
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for i in 0..values.len() {
        sum += values[i];
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

/// First step whose moving-average loss is at or below `threshold`.
pub fn steps_to_threshold(log: &[MetricRecord], threshold: f64, window: usize) -> Option<usize> {
    let losses: Vec<f64> = log.iter().map(|r| r.loss).collect();
    moving_average(&losses, window)
        .iter()
        .position(|l| *l <= threshold)
        .map(|i| log[i].step + 1)
}

/// Everything needed to reproduce a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: TrainConfig,
    pub num_gaussians: usize,
    pub train_frames: Vec<usize>,
    /// Evaluation composites predictions and targets over this colour.
    pub eval_background: [f64; 3],
}
