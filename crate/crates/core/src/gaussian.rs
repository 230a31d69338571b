//! Structure-of-arrays Gaussian attribute storage.
//!
//! The same type carries pre-activation parameters (log-scale, opacity and
//! color logits, unnormalized quaternions), post-activation values, and
//! gradients with respect to either.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct GaussianSet {
    pub position: Vec<[f64; 3]>,
    /// Quaternions in w, x, y, z order.
    pub rotation: Vec<[f64; 4]>,
    pub scale: Vec<[f64; 3]>,
    pub opacity: Vec<f64>,
    pub color: Vec<[f64; 3]>,
}

impl GaussianSet {
    pub fn zeros(n: usize) -> Self {
        Self {
            position: vec![[0.0; 3]; n],
            rotation: vec![[0.0; 4]; n],
            scale: vec![[0.0; 3]; n],
            opacity: vec![0.0; n],
            color: vec![[0.0; 3]; n],
        }
    }

    pub fn len(&self) -> usize {
        self.position.len()
    }

    pub fn is_empty(&self) -> bool {
        self.position.is_empty()
    }

    /// Checks that every attribute array has the same length.
    pub fn validate(&self) -> Result<()> {
        let n = self.position.len();
        check_dim("gaussian rotation", n, self.rotation.len())?;
        check_dim("gaussian scale", n, self.scale.len())?;
        check_dim("gaussian opacity", n, self.opacity.len())?;
        check_dim("gaussian color", n, self.color.len())
    }

    pub fn fill_zero(&mut self) {
        self.position.iter_mut().for_each(|v| *v = [0.0; 3]);
        self.rotation.iter_mut().for_each(|v| *v = [0.0; 4]);
        self.scale.iter_mut().for_each(|v| *v = [0.0; 3]);
        self.opacity.iter_mut().for_each(|v| *v = 0.0);
        self.color.iter_mut().for_each(|v| *v = [0.0; 3]);
    }

    /// `self += other`, attribute-wise.
    pub fn add_assign(&mut self, other: &GaussianSet) {
        add_rows(&mut self.position, &other.position);
        add_rows(&mut self.rotation, &other.rotation);
        add_rows(&mut self.scale, &other.scale);
        for (a, b) in self.opacity.iter_mut().zip(&other.opacity) {
            *a += b;
        }
        add_rows(&mut self.color, &other.color);
    }

    /// Flattens every scalar into one vector (position, rotation, scale,
    /// opacity, color; each attribute contiguous).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len() * 14);
        out.extend(self.position.iter().flatten());
        out.extend(self.rotation.iter().flatten());
        out.extend(self.scale.iter().flatten());
        out.extend(self.opacity.iter());
        out.extend(self.color.iter().flatten());
        out
    }

    /// Mutable views over all scalars in the same order as [`flatten`](Self::flatten).
    pub fn scalars_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.position
            .iter_mut()
            .flatten()
            .chain(self.rotation.iter_mut().flatten())
            .chain(self.scale.iter_mut().flatten())
            .chain(self.opacity.iter_mut())
            .chain(self.color.iter_mut().flatten())
    }
}

/// Blendshape delta: position, rotation and color only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct GaussianDelta {
    pub position: Vec<[f64; 3]>,
    pub rotation: Vec<[f64; 4]>,
    pub color: Vec<[f64; 3]>,
}

impl GaussianDelta {
    pub fn zeros(n: usize) -> Self {
        Self {
            position: vec![[0.0; 3]; n],
            rotation: vec![[0.0; 4]; n],
            color: vec![[0.0; 3]; n],
        }
    }

    pub fn len(&self) -> usize {
        self.position.len()
    }

    pub fn is_empty(&self) -> bool {
        self.position.is_empty()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        check_dim("delta position", n, self.position.len())?;
        check_dim("delta rotation", n, self.rotation.len())?;
        check_dim("delta color", n, self.color.len())
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len() * 10);
        out.extend(self.position.iter().flatten());
        out.extend(self.rotation.iter().flatten());
        out.extend(self.color.iter().flatten());
        out
    }

    pub fn scalars_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.position
            .iter_mut()
            .flatten()
            .chain(self.rotation.iter_mut().flatten())
            .chain(self.color.iter_mut().flatten())
    }
}

fn add_rows<const D: usize>(a: &mut [[f64; D]], b: &[[f64; D]]) {
    for (ra, rb) in a.iter_mut().zip(b) {
        for (x, y) in ra.iter_mut().zip(rb) {
            *x += y;
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}
