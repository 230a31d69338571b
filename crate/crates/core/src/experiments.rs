//! Ablation grids shared by the command line and the acceptance suite.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::avatar::Driver;
use crate::dataset::SequenceDataset;
use crate::error::Result;
use crate::gaussian::GaussianSet;
use crate::online::{run_online, OnlineConfig};
use crate::render::{
    preprocess, rasterize, render_backward, BatchScheduler, Camera, Image, RenderSettings, Scheme,
};
use crate::train::{evaluate, steps_to_threshold, train_offline, TrainConfig};

/// Plain text table with aligned columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(headers: &[&str]) -> Self {
        Self {
            headers: headers.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let cols = self.headers.len();
        let width: Vec<usize> = (0..cols)
            .map(|c| {
                self.rows
                    .iter()
                    .map(|r| r.get(c).map_or(0, |s| s.chars().count()))
                    .chain([self.headers[c].chars().count()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cells: &[String]| {
            let padded: Vec<String> = (0..cols)
                .map(|c| {
                    let s = cells.get(c).map_or("", |s| s.as_str());
                    format!("{s:<w$}", w = width[c])
                })
                .collect();
            format!("| {} |\n", padded.join(" | "))
        };
        let mut out = line(&self.headers);
        let rule: Vec<String> = width.iter().map(|w| "-".repeat(*w)).collect();
        out.push_str(&format!("|-{}-|\n", rule.join("-|-")));
        for r in &self.rows {
            out.push_str(&line(r));
        }
        out
    }
}

/// Random Gaussians filling the view of `camera`, for throughput tests.
pub fn random_scene(n: usize, seed: u64) -> GaussianSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = GaussianSet::zeros(n);
    for i in 0..n {
        g.position[i] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let q: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-9);
        g.rotation[i] = q.map(|v| v / norm);
        g.scale[i] = std::array::from_fn(|_| rng.gen_range(0.01..0.05));
        g.opacity[i] = rng.gen_range(0.3..0.9);
        g.color[i] = std::array::from_fn(|_| rng.gen());
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThroughputRow {
    pub scheme: Scheme,
    pub workers: usize,
    pub images_per_sec: f64,
    pub syncs_per_batch: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThroughputSetup {
    pub gaussians: usize,
    pub size: u32,
    pub batch: usize,
    pub batches: usize,
    pub workers: usize,
}

impl Default for ThroughputSetup {
    fn default() -> Self {
        Self {
            gaussians: 5000,
            size: 64,
            batch: 10,
            batches: 3,
            workers: 8,
        }
    }
}

/// Forward + backward render throughput of each batching scheme.
pub fn batching_throughput(setup: &ThroughputSetup) -> Result<Vec<ThroughputRow>> {
    let camera = Camera::looking_at_origin(4.0, 1.25 * setup.size as f64, setup.size, setup.size);
    let scenes: Vec<GaussianSet> = (0..setup.batch)
        .map(|i| random_scene(setup.gaussians, i as u64))
        .collect();
    let grad = Image::filled(setup.size, setup.size, [1e-3; 3]);
    let settings = RenderSettings::default();
    let mut rows = Vec::new();
    for scheme in Scheme::ALL {
        let sched = BatchScheduler::new(setup.workers, scheme)?;
        let run = || {
            sched.run(
                &scenes,
                |g, par| preprocess(g, &camera, &settings, par),
                |g, proj, par| {
                    let (img, _) = rasterize(&proj, &camera, [0.5; 3], &settings, par);
                    let grads = render_backward(g, &camera, &proj, [0.5; 3], &grad, &settings, par);
                    Ok((img, grads.opacity.iter().sum::<f64>()))
                },
            )
        };
        run()?;
        sched.reset_sync_count();
        let start = Instant::now();
        for _ in 0..setup.batches {
            run()?;
        }
        let secs = start.elapsed().as_secs_f64();
        rows.push(ThroughputRow {
            scheme,
            workers: sched.workers(),
            images_per_sec: (setup.batches * setup.batch) as f64 / secs,
            syncs_per_batch: sched.sync_count() as f64 / setup.batches as f64,
        });
    }
    Ok(rows)
}

pub fn throughput_table(rows: &[ThroughputRow]) -> Table {
    let mut t = Table::new(&["scheme", "workers", "images/s", "syncs/batch"]);
    for r in rows {
        t.push(vec![
            r.scheme.name().into(),
            r.workers.to_string(),
            format!("{:.2}", r.images_per_sec),
            format!("{:.0}", r.syncs_per_batch),
        ]);
    }
    t
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverRow {
    pub driver: Driver,
    pub blendshapes: usize,
    pub psnr: f64,
    pub ssim: f64,
}

/// Learned MLP mapping versus feeding the first K rig parameters directly,
/// at equal K, scored on the held-out frames.
pub fn reducing_ablation(dataset: &SequenceDataset, config: &TrainConfig) -> Result<Vec<DriverRow>> {
    let (train, test) = dataset.split();
    let train: Vec<usize> = train.collect();
    let test: Vec<usize> = test.collect();
    [Driver::Mlp, Driver::IdentitySlice]
        .into_iter()
        .map(|driver| {
            let cfg = TrainConfig {
                driver,
                ..config.clone()
            };
            let out = train_offline(dataset, &train, &cfg)?;
            let report = evaluate(&out.model, dataset, &test, &cfg.render)?;
            Ok(DriverRow {
                driver,
                blendshapes: cfg.blendshapes,
                psnr: report.mean_psnr,
                ssim: report.mean_ssim,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColorInitRow {
    pub seed: u64,
    pub steps_with: Option<usize>,
    pub steps_without: Option<usize>,
}

impl ColorInitRow {
    /// With color init strictly faster; never reaching the threshold counts
    /// as slowest.
    pub fn faster_with_init(&self) -> bool {
        match (self.steps_with, self.steps_without) {
            (Some(a), Some(b)) => a < b,
            (Some(_), None) => true,
            _ => false,
        }
    }
}

/// Steps until the moving-average training loss reaches `threshold`, with
/// and without color initialization, for each seed.
pub fn color_init_ablation(
    dataset: &SequenceDataset,
    config: &TrainConfig,
    seeds: &[u64],
    threshold: f64,
    window: usize,
) -> Result<Vec<ColorInitRow>> {
    let (train, _) = dataset.split();
    let train: Vec<usize> = train.collect();
    seeds
        .iter()
        .map(|&seed| {
            let mut steps = [None; 2];
            for (slot, color_init) in [true, false].into_iter().enumerate() {
                let cfg = TrainConfig {
                    seed,
                    color_init,
                    ..config.clone()
                };
                let out = train_offline(dataset, &train, &cfg)?;
                steps[slot] = steps_to_threshold(&out.log, threshold, window);
            }
            Ok(ColorInitRow {
                seed,
                steps_with: steps[0],
                steps_without: steps[1],
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingRow {
    pub variant: String,
    pub seed: u64,
    pub local_capacity: usize,
    pub global_capacity: usize,
    pub early_mean_gap: f64,
    pub mean_final_l1: f64,
    pub psnr: f64,
}

/// Streams the training frames with each pool configuration and reports the
/// forgetting gap and held-out PSNR.
pub fn sampling_ablation(
    dataset: &SequenceDataset,
    config: &OnlineConfig,
    variants: &[(&str, bool, bool)],
    seeds: &[u64],
) -> Result<Vec<SamplingRow>> {
    let (train, test) = dataset.split();
    let stream: Vec<usize> = train.collect();
    let test: Vec<usize> = test.collect();
    let mut rows = Vec::new();
    for &seed in seeds {
        for &(name, use_local, use_global) in variants {
            let mut cfg = config.clone();
            cfg.train.seed = seed;
            cfg.use_local = use_local;
            cfg.use_global = use_global;
            let out = run_online(dataset, &stream, &cfg)?;
            let report = evaluate(&out.model, dataset, &test, &cfg.train.render)?;
            rows.push(SamplingRow {
                variant: name.to_string(),
                seed,
                local_capacity: cfg.local_capacity,
                global_capacity: cfg.global_capacity,
                early_mean_gap: out.forgetting.early_mean_gap,
                mean_final_l1: out.forgetting.mean_final_l1,
                psnr: report.mean_psnr,
            });
        }
    }
    Ok(rows)
}

/// The three pool configurations: full, without global, without local.
pub const SAMPLING_VARIANTS: [(&str, bool, bool); 3] = [
    ("full", true, true),
    ("w/o global", true, false),
    ("w/o local", false, true),
];

/// Full method at several (local, global) capacity pairs.
pub fn pool_size_ablation(
    dataset: &SequenceDataset,
    config: &OnlineConfig,
    sizes: &[(usize, usize)],
    seed: u64,
) -> Result<Vec<SamplingRow>> {
    let mut rows = Vec::new();
    for &(local, global) in sizes {
        let cfg = OnlineConfig {
            local_capacity: local,
            global_capacity: global,
            ..config.clone()
        };
        rows.extend(sampling_ablation(dataset, &cfg, &SAMPLING_VARIANTS[..1], &[seed])?);
    }
    Ok(rows)
}

pub fn sampling_table(rows: &[SamplingRow]) -> Table {
    let mut t = Table::new(&["variant", "seed", "local", "global", "forgetting gap", "final L1", "PSNR"]);
    for r in rows {
        t.push(vec![
            r.variant.clone(),
            r.seed.to_string(),
            r.local_capacity.to_string(),
            r.global_capacity.to_string(),
            format!("{:.5}", r.early_mean_gap),
            format!("{:.5}", r.mean_final_l1),
            format!("{:.2}", r.psnr),
        ]);
    }
    t
}

pub fn driver_table(rows: &[DriverRow]) -> Table {
    let mut t = Table::new(&["driver", "K", "PSNR", "SSIM"]);
    for r in rows {
        let name = match r.driver {
            Driver::Mlp => "reduced (MLP)",
            Driver::IdentitySlice => "w/o reducing",
        };
        t.push(vec![
            name.into(),
            r.blendshapes.to_string(),
            format!("{:.2}", r.psnr),
            format!("{:.4}", r.ssim),
        ]);
    }
    t
}

pub fn color_init_table(rows: &[ColorInitRow], threshold: f64) -> Table {
    let with = format!("steps to L1 {threshold} (with init)");
    let without = format!("steps to L1 {threshold} (without)");
    let mut t = Table::new(&["seed", &with, &without]);
    let fmt = |s: Option<usize>| s.map_or("not reached".to_string(), |v| v.to_string());
    for r in rows {
        t.push(vec![r.seed.to_string(), fmt(r.steps_with), fmt(r.steps_without)]);
    }
    t
}
