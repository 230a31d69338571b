//! One-shot color initialization from splat-weighted pixel averages.

use serde::{Deserialize, Serialize};

use crate::avatar::AvatarModel;
use crate::error::{check_dim, Error, Result};
use crate::gaussian::logit;
use crate::render::{Image, RenderAux};

pub const DEFAULT_THRESHOLD: f64 = 0.1;
const CLAMP_EPS: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorInitState {
    /// Set once a Gaussian's color has been initialized; never cleared.
    pub visited: Vec<bool>,
    pub threshold: f64,
}

impl ColorInitState {
    pub fn new(n: usize) -> Self {
        Self {
            visited: vec![false; n],
            threshold: DEFAULT_THRESHOLD,
        }
    }

    pub fn num_visited(&self) -> usize {
        self.visited.iter().filter(|v| **v).count()
    }

    pub fn all_visited(&self) -> bool {
        self.visited.iter().all(|v| *v)
    }
}

/// Per-Gaussian weighted-average colors from one rendered frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorEstimate {
    pub color: Vec<[f64; 3]>,
    pub eligible: Vec<bool>,
    pub max_weight: Vec<f64>,
}

/// `c[g] = Σ w·I / Σ w` over the pixels where `g` contributed; `g` is eligible
/// when its largest per-pixel weight exceeds `threshold`. `aux` must come from
/// a forward pass with contribution recording enabled.
pub fn estimate_colors(aux: &RenderAux, target: &Image, threshold: f64) -> Result<ColorEstimate> {
    let contribs = aux
        .contributions
        .as_ref()
        .ok_or_else(|| Error::Config("color init needs recorded contributions".into()))?;
    check_dim("target pixels", aux.transmittance.len(), target.data.len())?;
    let n = aux.max_weight.len();
    let mut num = vec![[0.0; 3]; n];
    let mut den = vec![0.0; n];
    for c in contribs {
        let g = c.gaussian as usize;
        let px = target.data[c.pixel as usize];
        for ch in 0..3 {
            num[g][ch] += c.weight * px[ch];
        }
        den[g] += c.weight;
    }
    let eligible: Vec<bool> = aux.max_weight.iter().map(|w| *w > threshold).collect();
    let mut color = vec![[0.0; 3]; n];
    for g in 0..n {
        if den[g] > 0.0 {
            color[g] = num[g].map(|v| v / den[g]);
        } else if eligible[g] {
            return Err(Error::Inconsistent(format!(
                "gaussian {g} is eligible for color init but has zero total weight"
            )));
        }
    }
    Ok(ColorEstimate {
        color,
        eligible,
        max_weight: aux.max_weight.clone(),
    })
}

impl ColorEstimate {
    /// Combines estimates from the frames of one batch: for each Gaussian the
    /// eligible frame with the largest max weight wins (earliest on ties).
    pub fn merge(frames: &[ColorEstimate]) -> Option<ColorEstimate> {
        let mut out = frames.first()?.clone();
        for f in &frames[1..] {
            for g in 0..out.color.len() {
                if f.eligible[g] && (!out.eligible[g] || f.max_weight[g] > out.max_weight[g]) {
                    out.color[g] = f.color[g];
                    out.eligible[g] = true;
                    out.max_weight[g] = f.max_weight[g];
                }
            }
        }
        Some(out)
    }
}

/// Writes eligible, not yet visited estimates into the base color logits and
/// marks them visited. Returns how many Gaussians were initialized.
pub fn apply_color_init(
    model: &mut AvatarModel,
    estimate: &ColorEstimate,
    state: &mut ColorInitState,
) -> Result<usize> {
    let n = model.num_gaussians();
    check_dim("color estimates", n, estimate.color.len())?;
    check_dim("color init state", n, state.visited.len())?;
    let mut count = 0;
    for g in 0..n {
        if estimate.eligible[g] && !state.visited[g] {
            model.base.color[g] = estimate.color[g].map(|c| logit(c.clamp(CLAMP_EPS, 1.0 - CLAMP_EPS)));
            state.visited[g] = true;
            count += 1;
        }
    }
    Ok(count)
}
