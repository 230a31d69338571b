//! Streaming reconstruction with a local FIFO and a global reservoir of
//! past frames.

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::avatar::AvatarModel;
use crate::color_init::ColorInitState;
use crate::dataset::SequenceDataset;
use crate::error::{Error, Result};
use crate::mesh::DeformedFrames;
use crate::render::RgbaImage;
use crate::train::{
    initialize_model, random_background, render_model, FrameInput, MetricRecord, TrainConfig,
    Trainer,
};

/// One ingested frame with its deformed mesh cached.
#[derive(Debug, Clone)]
pub struct FrameSample {
    pub index: usize,
    pub image: RgbaImage,
    pub theta: Vec<f64>,
    pub frames: DeformedFrames,
}

/// What happened to the item evicted from the local pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ingest {
    /// Local pool still filling; nothing evicted.
    Appended,
    /// Evicted item stored in a free global slot.
    Stored,
    /// Evicted item replaced global slot `k`.
    Replaced(usize),
    /// Evicted item dropped.
    Discarded,
}

#[derive(Debug, Clone)]
pub struct SamplePools<T> {
    pub local: VecDeque<T>,
    pub global: Vec<T>,
    pub local_capacity: usize,
    pub global_capacity: usize,
    /// Items offered to the global reservoir so far.
    pub offered: usize,
}

impl<T> SamplePools<T> {
    pub fn new(local_capacity: usize, global_capacity: usize) -> Self {
        Self {
            local: VecDeque::with_capacity(local_capacity),
            global: Vec::with_capacity(global_capacity),
            local_capacity: local_capacity.max(1),
            global_capacity,
            offered: 0,
        }
    }

    /// Appends to the local FIFO, moving its oldest item to the reservoir if
    /// full. The `j`-th offered item (1-based) is kept with probability
    /// `capacity / j` once the reservoir is full, by drawing `k ∈ [0, j)` and
    /// replacing slot `k` when `k < capacity`.
    pub fn process_frame<R: Rng>(&mut self, sample: T, rng: &mut R) -> Ingest {
        let mut outcome = Ingest::Appended;
        if self.local.len() == self.local_capacity {
            let evicted = self.local.pop_front().expect("local pool is full");
            self.offered += 1;
            outcome = if self.global.len() < self.global_capacity {
                self.global.push(evicted);
                Ingest::Stored
            } else {
                let k = rng.gen_range(0..self.offered);
                if k < self.global_capacity {
                    self.global[k] = evicted;
                    Ingest::Replaced(k)
                } else {
                    Ingest::Discarded
                }
            };
        }
        self.local.push_back(sample);
        outcome
    }

    /// `round(η·B)` items (ties up) uniformly with replacement from the local
    /// pool, the rest from the global pool. An empty pool hands its share to
    /// the other.
    pub fn sample_batch<R: Rng>(&self, batch: usize, eta: f64, rng: &mut R) -> Result<Vec<&T>> {
        if self.local.is_empty() && self.global.is_empty() {
            return Err(Error::EmptyPools);
        }
        let mut n_local = local_share(batch, eta);
        if self.global.is_empty() {
            n_local = batch;
        } else if self.local.is_empty() {
            n_local = 0;
        }
        let mut out = Vec::with_capacity(batch);
        for _ in 0..n_local {
            out.push(&self.local[rng.gen_range(0..self.local.len())]);
        }
        for _ in n_local..batch {
            out.push(&self.global[rng.gen_range(0..self.global.len())]);
        }
        Ok(out)
    }
}

/// Local share of a batch: `η·B` rounded half up, clamped to `[0, B]`.
pub fn local_share(batch: usize, eta: f64) -> usize {
    ((eta * batch as f64 + 0.5).floor().max(0.0) as usize).min(batch)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StreamMode {
    /// A fixed number of optimization steps after each arriving frame.
    Deterministic,
    /// Frames arrive at `fps` while training runs continuously.
    WallClock { fps: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OnlineConfig {
    pub train: TrainConfig,
    pub local_capacity: usize,
    pub global_capacity: usize,
    /// Fraction of each batch drawn from the local pool.
    pub eta: f64,
    pub steps_per_frame: usize,
    pub mode: StreamMode,
    /// Frames to ingest before the first optimization step.
    pub warmup_frames: usize,
    /// Disabling a pool routes its share of every batch to the other one.
    pub use_global: bool,
    pub use_local: bool,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            local_capacity: 150,
            global_capacity: 1000,
            eta: 0.7,
            steps_per_frame: 25,
            mode: StreamMode::Deterministic,
            warmup_frames: 1,
            use_global: true,
            use_local: true,
        }
    }
}

impl OnlineConfig {
    fn effective_eta(&self) -> f64 {
        match (self.use_local, self.use_global) {
            (true, false) => 1.0,
            (false, true) => 0.0,
            _ => self.eta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameLossRecord {
    pub frame: usize,
    /// Smallest L1 (over black) seen while the frame was in a training batch;
    /// `None` if it was never sampled.
    pub min_l1: Option<f64>,
    /// L1 (over black) of the final model.
    pub final_l1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForgettingReport {
    /// Mean of `final − min` over sampled frames in the first quarter of the stream.
    pub early_mean_gap: f64,
    pub early_frames: usize,
    pub mean_final_l1: f64,
}

pub struct OnlineOutput {
    pub model: AvatarModel,
    pub color_state: ColorInitState,
    pub history: Vec<FrameLossRecord>,
    pub forgetting: ForgettingReport,
    pub log: Vec<MetricRecord>,
    pub frames_ingested: usize,
    /// False when the stream ended before warmup finished.
    pub completed: bool,
}

/// L1 over black between the model rendered for a frame and the frame's
/// RGBA target.
pub fn black_l1(model: &AvatarModel, dataset: &SequenceDataset, frame: usize) -> Result<f64> {
    let f = &dataset.frames[frame];
    let deformed = DeformedFrames::from_params(&dataset.rig, &f.theta)?;
    let pred = render_model(
        model,
        &deformed,
        &f.theta,
        &dataset.camera,
        [0.0; 3],
        &crate::render::RenderSettings::default(),
    )?;
    let target = f.image.over([0.0; 3]);
    let (l, _) = crate::train::l1_loss(&pred, &target)?;
    Ok(l)
}

/// Mean `final − min` over the first quarter (rounded up) of the stream.
pub fn forgetting_report(history: &[FrameLossRecord]) -> ForgettingReport {
    let early = history.len().div_ceil(4);
    let gaps: Vec<f64> = history[..early]
        .iter()
        .filter_map(|r| r.min_l1.map(|m| r.final_l1 - m))
        .collect();
    ForgettingReport {
        early_mean_gap: if gaps.is_empty() {
            0.0
        } else {
            gaps.iter().sum::<f64>() / gaps.len() as f64
        },
        early_frames: gaps.len(),
        mean_final_l1: history.iter().map(|r| r.final_l1).sum::<f64>() / history.len().max(1) as f64,
    }
}

/// Replays `stream` (dataset frame indices, in arrival order) through the
/// pools while training.
pub fn run_online(dataset: &SequenceDataset, stream: &[usize], config: &OnlineConfig) -> Result<OnlineOutput> {
    if stream.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !config.use_local && !config.use_global {
        return Err(Error::Config("at least one sample pool must be enabled".into()));
    }
    let model = initialize_model(&dataset.rig, &config.train)?;
    let mut trainer = Trainer::new(model, config.train.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.train.seed);
    rng.set_stream(2);
    let mut pools: SamplePools<FrameSample> = SamplePools::new(
        config.local_capacity,
        if config.use_global { config.global_capacity } else { 0 },
    );
    let mut min_l1: Vec<Option<f64>> = vec![None; stream.len()];
    let position: std::collections::HashMap<usize, usize> =
        stream.iter().enumerate().map(|(p, &f)| (f, p)).collect();
    let mut log = Vec::new();
    let start = Instant::now();
    let eta = config.effective_eta();

    let ingest = |pools: &mut SamplePools<FrameSample>, rng: &mut ChaCha8Rng, pos: usize| -> Result<()> {
        let f = &dataset.frames[stream[pos]];
        let sample = FrameSample {
            index: stream[pos],
            image: f.image.clone(),
            theta: f.theta.clone(),
            frames: DeformedFrames::from_params(&dataset.rig, &f.theta)?,
        };
        pools.process_frame(sample, rng);
        Ok(())
    };

    let step = |trainer: &mut Trainer,
                    pools: &SamplePools<FrameSample>,
                    rng: &mut ChaCha8Rng,
                    min_l1: &mut Vec<Option<f64>>,
                    log: &mut Vec<MetricRecord>|
     -> Result<()> {
        let picks = pools.sample_batch(config.train.batch_size, eta, rng)?;
        let backgrounds: Vec<[f64; 3]> = picks.iter().map(|_| random_background(rng)).collect();
        let items: Vec<FrameInput> = picks
            .iter()
            .zip(&backgrounds)
            .map(|(s, &background)| FrameInput {
                theta: &s.theta,
                frames: &s.frames,
                target: &s.image,
                background,
            })
            .collect();
        let stats = trainer.step(&dataset.camera, &items)?;
        for (s, l) in picks.iter().zip(&stats.item_black_l1) {
            let slot = &mut min_l1[position[&s.index]];
            *slot = Some(slot.map_or(*l, |m| m.min(*l)));
        }
        log.push(MetricRecord {
            step: log.len(),
            loss: stats.loss,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        Ok(())
    };

    let warmup = config.warmup_frames.max(1);
    let mut ingested = 0;
    match config.mode {
        StreamMode::Deterministic => {
            for pos in 0..stream.len() {
                ingest(&mut pools, &mut rng, pos)?;
                ingested += 1;
                if ingested < warmup {
                    continue;
                }
                for _ in 0..config.steps_per_frame {
                    step(&mut trainer, &pools, &mut rng, &mut min_l1, &mut log)?;
                }
            }
        }
        StreamMode::WallClock { fps } => {
            if !(fps > 0.0) {
                return Err(Error::Config("stream fps must be positive".into()));
            }
            let period = Duration::from_secs_f64(1.0 / fps);
            let clock = Instant::now();
            while ingested < stream.len() {
                let due = ((clock.elapsed().as_secs_f64() / period.as_secs_f64()) as usize + 1)
                    .min(stream.len());
                while ingested < due {
                    ingest(&mut pools, &mut rng, ingested)?;
                    ingested += 1;
                }
                if ingested >= warmup {
                    step(&mut trainer, &pools, &mut rng, &mut min_l1, &mut log)?;
                } else {
                    std::thread::sleep(period / 4);
                }
            }
        }
    }

    let completed = ingested >= warmup;
    let model = trainer.model;
    let history = stream
        .iter()
        .zip(&min_l1)
        .map(|(&frame, &m)| {
            Ok(FrameLossRecord {
                frame,
                min_l1: m,
                final_l1: black_l1(&model, dataset, frame)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OnlineOutput {
        forgetting: forgetting_report(&history),
        model,
        color_state: trainer.color_state,
        history,
        log,
        frames_ingested: ingested,
        completed,
    })
}
