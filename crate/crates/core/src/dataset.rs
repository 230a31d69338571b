//! In-memory sequence: rig, camera, and per-frame (θ, RGBA target).

use std::ops::Range;

use crate::error::{check_dim, Error, Result};
use crate::mesh::ParametricHeadRig;
use crate::render::{Camera, RgbaImage};

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub theta: Vec<f64>,
    pub image: RgbaImage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceDataset {
    pub rig: ParametricHeadRig,
    pub camera: Camera,
    pub frames: Vec<Frame>,
}

/// Frames reserved for evaluation at the end of a sequence of `n` frames:
/// 350 for long sequences, otherwise the last 17.5 % (rounded).
pub fn holdout_count(n: usize) -> usize {
    if n >= 2000 {
        350
    } else {
        ((n as f64) * 0.175).round() as usize
    }
}

impl SequenceDataset {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.rig.validate()?;
        self.camera.validate()?;
        let h = self.rig.param_dim();
        for (i, f) in self.frames.iter().enumerate() {
            if f.theta.len() != h {
                return Err(Error::Config(format!(
                    "frame {i}: θ has {} entries, rig expects {h}",
                    f.theta.len()
                )));
            }
            if f.image.width != self.camera.width || f.image.height != self.camera.height {
                return Err(Error::Config(format!(
                    "frame {i}: image is {}x{}, camera is {}x{}",
                    f.image.width, f.image.height, self.camera.width, self.camera.height
                )));
            }
            check_dim("frame pixels", self.camera.num_pixels(), f.image.data.len())?;
        }
        Ok(())
    }

    /// (training range, held-out range).
    pub fn split(&self) -> (Range<usize>, Range<usize>) {
        let n = self.len();
        let cut = n - holdout_count(n).min(n);
        (0..cut, cut..n)
    }
}
