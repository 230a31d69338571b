//! Batch scheduling of the two render stages over a worker pool.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::camera::{Camera, Image};
use super::preprocess::{preprocess, Projection, RenderSettings};
use super::rasterize::{rasterize, RenderAux};
use crate::error::{Error, Result};
use crate::gaussian::GaussianSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// One item at a time on the calling thread.
    Sequential,
    /// One item at a time, each stage parallel inside the item, with a
    /// synchronization after every stage.
    NaiveParallel,
    /// Stage 1 for all items, one synchronization, then stage 2 for all items.
    TwoStage,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Sequential, Scheme::NaiveParallel, Scheme::TwoStage];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Sequential => "sequential",
            Scheme::NaiveParallel => "naive-parallel",
            Scheme::TwoStage => "two-stage",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown batching scheme '{s}'")))
    }
}

/// Worker pool plus an instrumented synchronization counter.
///
/// A synchronization is a point where the host waits for every in-flight
/// task before it can launch the next stage of the same batch.
pub struct BatchScheduler {
    pool: rayon::ThreadPool,
    scheme: Scheme,
    syncs: AtomicUsize,
}

impl BatchScheduler {
    pub fn new(workers: usize, scheme: Scheme) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
        Ok(Self {
            pool,
            scheme,
            syncs: AtomicUsize::new(0),
        })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }

    pub fn sync_count(&self) -> usize {
        self.syncs.load(Ordering::SeqCst)
    }

    pub fn reset_sync_count(&self) {
        self.syncs.store(0, Ordering::SeqCst);
    }

    fn sync(&self) {
        self.syncs.fetch_add(1, Ordering::SeqCst);
    }

    /// Runs `stage1` then `stage2` on every item under the configured scheme
    /// and returns results in item order. Each stage receives a flag telling
    /// it whether it may parallelize internally.
    pub fn run<T, M, R, F1, F2>(&self, items: &[T], stage1: F1, stage2: F2) -> Result<Vec<R>>
    where
        T: Sync,
        M: Send,
        R: Send,
        F1: Fn(&T, bool) -> Result<M> + Sync,
        F2: Fn(&T, M, bool) -> Result<R> + Sync,
    {
        match self.scheme {
            Scheme::Sequential => items
                .iter()
                .map(|item| {
                    let mid = stage1(item, false)?;
                    stage2(item, mid, false)
                })
                .collect(),
            Scheme::NaiveParallel => {
                let mut out = Vec::with_capacity(items.len());
                for (i, item) in items.iter().enumerate() {
                    let mid = self.pool.install(|| stage1(item, true))?;
                    self.sync();
                    out.push(self.pool.install(|| stage2(item, mid, true))?);
                    if i + 1 < items.len() {
                        self.sync();
                    }
                }
                Ok(out)
            }
            Scheme::TwoStage => {
                let mids: Vec<M> = self.pool.install(|| {
                    items
                        .par_iter()
                        .map(|item| stage1(item, true))
                        .collect::<Result<_>>()
                })?;
                self.sync();
                self.pool.install(|| {
                    items
                        .par_iter()
                        .zip(mids.into_par_iter())
                        .map(|(item, mid)| stage2(item, mid, true))
                        .collect()
                })
            }
        }
    }

    /// Runs `f` inside the worker pool.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }
}

/// One view to render: activated world Gaussians, camera, background.
pub struct RenderItem<'a> {
    pub world: &'a GaussianSet,
    pub camera: Camera,
    pub background: [f64; 3],
}

/// preprocess → (one synchronization) → rasterize for every item.
pub fn render_batch(
    scheduler: &BatchScheduler,
    items: &[RenderItem<'_>],
    settings: &RenderSettings,
) -> Result<Vec<(Image, RenderAux)>> {
    if items.is_empty() {
        return Err(Error::Config("render batch must contain at least one item".into()));
    }
    scheduler.run(
        items,
        |item, par| preprocess(item.world, &item.camera, settings, par),
        |item, proj: Projection, par| {
            Ok(rasterize(&proj, &item.camera, item.background, settings, par))
        },
    )
}
