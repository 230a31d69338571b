use serde::{Deserialize, Serialize};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Moments for one parameter group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update. `params` must yield exactly as many
/// scalars as `grads` holds.
pub fn adam_step<'a>(
    params: impl IntoIterator<Item = &'a mut f64>,
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
) {
    assert_eq!(state.m.len(), grads.len(), "adam state does not match gradient length");
    state.step += 1;
    let t = state.step as f64;
    let c1 = 1.0 - BETA1.powf(t);
    let c2 = 1.0 - BETA2.powf(t);
    let mut count = 0;
    for (i, p) in params.into_iter().enumerate() {
        let g = grads[i];
        let m = BETA1 * state.m[i] + (1.0 - BETA1) * g;
        let v = BETA2 * state.v[i] + (1.0 - BETA2) * g * g;
        state.m[i] = m;
        state.v[i] = v;
        *p -= lr * (m / c1) / ((v / c2).sqrt() + EPSILON);
        count += 1;
    }
    assert_eq!(count, grads.len(), "parameter count does not match gradient length");
}
