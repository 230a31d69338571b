use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use super::rig::ParametricHeadRig;
use crate::error::{Error, Result};

/// Per-Gaussian triangle and barycentric coordinates, fixed after binding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct GaussianBindings {
    pub triangle: Vec<u32>,
    pub barycentric: Vec<[f64; 3]>,
}

impl GaussianBindings {
    /// `n` Gaussians on triangle 0 at its first vertex.
    pub fn default_for(n: usize) -> Self {
        Self {
            triangle: vec![0; n],
            barycentric: vec![[1.0, 0.0, 0.0]; n],
        }
    }

    pub fn len(&self) -> usize {
        self.triangle.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangle.is_empty()
    }

    pub fn validate(&self, num_faces: usize) -> Result<()> {
        if self.triangle.len() != self.barycentric.len() {
            return Err(Error::Config(format!(
                "{} triangle indices but {} barycentric triples",
                self.triangle.len(),
                self.barycentric.len()
            )));
        }
        for (i, (&t, b)) in self.triangle.iter().zip(&self.barycentric).enumerate() {
            if t as usize >= num_faces {
                return Err(Error::Config(format!(
                    "gaussian {i} bound to missing triangle {t}"
                )));
            }
            let sum: f64 = b.iter().sum();
            if b.iter().any(|&w| w < 0.0) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "gaussian {i} has invalid barycentric coordinates {b:?}"
                )));
            }
        }
        Ok(())
    }

    /// Hash over the exact bit patterns of all bindings.
    pub fn checksum(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.triangle.hash(&mut h);
        for b in &self.barycentric {
            for w in b {
                w.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }
}

/// Barycentric coordinates of `p` in the UV triangle `(a, b, c)`, or `None`
/// when the triangle is degenerate.
pub(crate) fn uv_barycentric(p: [f64; 2], a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> Option<[f64; 3]> {
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    if det.abs() < 1e-300 {
        return None;
    }
    let l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det;
    let l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det;
    Some([1.0 - l1 - l2, l1, l2])
}

const INSIDE_EPS: f64 = 1e-12;

/// One Gaussian per texel centre covered by some face in UV space, in
/// row-major texel order. A texel covered by several faces (seams, shared
/// edges) goes to the lowest face index. Returns the bindings and the
/// initial tangent-space positions (all at the frame origin).
pub fn bind_gaussians(
    rig: &ParametricHeadRig,
    uv_resolution: usize,
) -> Result<(GaussianBindings, Vec<[f64; 3]>)> {
    if uv_resolution == 0 {
        return Err(Error::Config("uv_resolution must be at least 1".into()));
    }
    let res = uv_resolution;
    let texel = |i: usize| (i as f64 + 0.5) / res as f64;
    let mut owner: Vec<Option<(u32, [f64; 3])>> = vec![None; res * res];
    for (fi, face) in rig.faces.iter().enumerate() {
        let [a, b, c] = face.map(|i| rig.uv_coords[i as usize]);
        let umin = a[0].min(b[0]).min(c[0]);
        let umax = a[0].max(b[0]).max(c[0]);
        let vmin = a[1].min(b[1]).min(c[1]);
        let vmax = a[1].max(b[1]).max(c[1]);
        let i0 = ((umin * res as f64 - 0.5).floor().max(0.0)) as usize;
        let i1 = ((umax * res as f64 - 0.5).ceil().max(0.0) as usize).min(res - 1);
        let j0 = ((vmin * res as f64 - 0.5).floor().max(0.0)) as usize;
        let j1 = ((vmax * res as f64 - 0.5).ceil().max(0.0) as usize).min(res - 1);
        for j in j0..=j1 {
            for i in i0..=i1 {
                let slot = &mut owner[j * res + i];
                if slot.is_some() {
                    continue;
                }
                let Some(w) = uv_barycentric([texel(i), texel(j)], a, b, c) else {
                    continue;
                };
                if w.iter().all(|&x| x >= -INSIDE_EPS) {
                    let clamped = w.map(|x| x.max(0.0));
                    let s: f64 = clamped.iter().sum();
                    *slot = Some((fi as u32, clamped.map(|x| x / s)));
                }
            }
        }
    }
    let mut bindings = GaussianBindings::default();
    for (t, w) in owner.into_iter().flatten() {
        bindings.triangle.push(t);
        bindings.barycentric.push(w);
    }
    if bindings.is_empty() {
        return Err(Error::EmptyBinding);
    }
    let n = bindings.len();
    Ok((bindings, vec![[0.0; 3]; n]))
}
