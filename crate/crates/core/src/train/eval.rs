use serde::{Deserialize, Serialize};

use super::step::render_model;
use crate::avatar::AvatarModel;
use crate::dataset::SequenceDataset;
use crate::error::{check_dim, Result};
use crate::mesh::DeformedFrames;
use crate::render::{Image, RenderSettings};

/// Reported PSNR for identical images.
pub const PSNR_CAP: f64 = 99.0;

pub fn psnr(pred: &Image, target: &Image) -> Result<f64> {
    check_dim("image pixels", target.data.len(), pred.data.len())?;
    let mut se = 0.0;
    for (p, t) in pred.data.iter().zip(&target.data) {
        for ch in 0..3 {
            se += (p[ch] - t[ch]).powi(2);
        }
    }
    let mse = se / (pred.data.len() * 3) as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let w: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Mean SSIM over channels and every window position fully inside the image
/// (11×11 Gaussian window, σ = 1.5; the window shrinks for smaller images).
pub fn ssim(pred: &Image, target: &Image) -> Result<f64> {
    check_dim("image width", target.width as usize, pred.width as usize)?;
    check_dim("image height", target.height as usize, pred.height as usize)?;
    let (w, h) = (pred.width as usize, pred.height as usize);
    let size = 11.min(w).min(h);
    let win = gaussian_window(size, 1.5);
    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..3 {
        for y0 in 0..=h - size {
            for x0 in 0..=w - size {
                let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for (j, wy) in win.iter().enumerate() {
                    for (i, wx) in win.iter().enumerate() {
                        let k = (y0 + j) * w + x0 + i;
                        let wt = wy * wx;
                        let a = pred.data[k][ch];
                        let b = target.data[k][ch];
                        mx += wt * a;
                        my += wt * b;
                        xx += wt * a * a;
                        yy += wt * b * b;
                        xy += wt * a * b;
                    }
                }
                let (vx, vy, cxy) = (xx - mx * mx, yy - my * my, xy - mx * my);
                total += ((2.0 * mx * my + SSIM_C1) * (2.0 * cxy + SSIM_C2))
                    / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2));
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub frame: usize,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub frames: Vec<FrameMetrics>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

/// Renders each listed frame over black and scores it against the target
/// composited over black.
pub fn evaluate(
    model: &AvatarModel,
    dataset: &SequenceDataset,
    frames: &[usize],
    settings: &RenderSettings,
) -> Result<EvalReport> {
    let mut out = Vec::with_capacity(frames.len());
    for &i in frames {
        let f = &dataset.frames[i];
        let deformed = DeformedFrames::from_params(&dataset.rig, &f.theta)?;
        let pred = render_model(model, &deformed, &f.theta, &dataset.camera, [0.0; 3], settings)?;
        let target = f.image.over([0.0; 3]);
        out.push(FrameMetrics {
            frame: i,
            psnr: psnr(&pred, &target)?,
            ssim: ssim(&pred, &target)?,
        });
    }
    let n = out.len().max(1) as f64;
    Ok(EvalReport {
        mean_psnr: out.iter().map(|m| m.psnr).sum::<f64>() / n,
        mean_ssim: out.iter().map(|m| m.ssim).sum::<f64>() / n,
        frames: out,
    })
}
