use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{map_params, MlpWeights};
use crate::error::{check_dim, Error, Result};
use crate::gaussian::{logit, sigmoid, GaussianDelta, GaussianSet};
use crate::mesh::{GaussianBindings, ParametricHeadRig};

/// How rig parameters become blendshape weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Driver {
    /// ψ = MLP(θ).
    #[default]
    Mlp,
    /// ψ_k = θ_k for the first K rig parameters; the MLP is bypassed.
    IdentitySlice,
}

/// Default values for a freshly initialized base model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelInit {
    pub opacity: f64,
    pub color: f64,
    /// Isotropic scale as a multiple of the mean Gaussian spacing on the mesh.
    pub spacing_factor: f64,
}

impl Default for ModelInit {
    fn default() -> Self {
        Self {
            opacity: 0.8,
            color: 0.5,
            spacing_factor: 0.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvatarModel {
    pub base: GaussianSet,
    pub deltas: Vec<GaussianDelta>,
    pub mlp: MlpWeights,
    pub bindings: GaussianBindings,
    pub driver: Driver,
}

impl AvatarModel {
    /// Base Gaussians sit at the origin of their tangent frame with default
    /// attributes; deltas start at zero, so the model renders exactly its base.
    pub fn initialize<R: Rng>(
        rig: &ParametricHeadRig,
        bindings: GaussianBindings,
        k: usize,
        driver: Driver,
        init: ModelInit,
        rng: &mut R,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("blendshape count K must be at least 1".into()));
        }
        let n = bindings.len();
        if n == 0 {
            return Err(Error::EmptyBinding);
        }
        let spacing = (rig.surface_area() / n as f64).sqrt();
        let log_scale = (init.spacing_factor * spacing).ln();
        let mut base = GaussianSet::zeros(n);
        for i in 0..n {
            base.rotation[i] = [1.0, 0.0, 0.0, 0.0];
            base.scale[i] = [log_scale; 3];
            base.opacity[i] = logit(init.opacity);
            base.color[i] = [logit(init.color); 3];
        }
        Ok(Self {
            base,
            deltas: vec![GaussianDelta::zeros(n); k],
            mlp: MlpWeights::new(rig.param_dim(), k, rng),
            bindings,
            driver,
        })
    }

    pub fn num_gaussians(&self) -> usize {
        self.base.len()
    }

    pub fn num_blendshapes(&self) -> usize {
        self.deltas.len()
    }

    pub fn param_dim(&self) -> usize {
        self.mlp.input_dim()
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.deltas.is_empty() {
            return Err(Error::Config("model has no blendshapes".into()));
        }
        for d in &self.deltas {
            d.validate(self.base.len())?;
        }
        self.mlp.validate()?;
        check_dim("mlp output", self.deltas.len(), self.mlp.output_dim())?;
        check_dim("bindings", self.base.len(), self.bindings.len())
    }

    /// Blendshape weights for rig parameters θ.
    pub fn weights(&self, theta: &[f64]) -> Result<Vec<f64>> {
        match self.driver {
            Driver::Mlp => map_params(&self.mlp, theta),
            Driver::IdentitySlice => {
                check_dim("rig parameters", self.param_dim(), theta.len())?;
                Ok(identity_slice(theta, self.num_blendshapes()))
            }
        }
    }
}

fn identity_slice(theta: &[f64], k: usize) -> Vec<f64> {
    (0..k).map(|i| theta.get(i).copied().unwrap_or(0.0)).collect()
}

/// `G₀ + Σ_k ψ_k ΔG_k` for position, rotation and color; opacity and scale
/// are copied from G₀. The delta sum is accumulated over k in order first and
/// then added to the base value.
pub fn blend(model: &AvatarModel, psi: &[f64]) -> Result<GaussianSet> {
    check_dim("blendshape weights", model.num_blendshapes(), psi.len())?;
    let mut out = model.base.clone();
    blend_rows(&mut out.position, &model.deltas, psi, |d| &d.position);
    blend_rows(&mut out.rotation, &model.deltas, psi, |d| &d.rotation);
    blend_rows(&mut out.color, &model.deltas, psi, |d| &d.color);
    Ok(out)
}

fn blend_rows<const D: usize>(
    out: &mut [[f64; D]],
    deltas: &[GaussianDelta],
    psi: &[f64],
    field: impl Fn(&GaussianDelta) -> &Vec<[f64; D]>,
) {
    for (n, row) in out.iter_mut().enumerate() {
        let mut acc = [0.0; D];
        for (delta, &w) in deltas.iter().zip(psi) {
            let d = &field(delta)[n];
            for c in 0..D {
                acc[c] += w * d[c];
            }
        }
        for c in 0..D {
            row[c] += acc[c];
        }
    }
}

/// Maps pre-activation parameters to valid Gaussians.
pub fn activate(raw: &GaussianSet) -> Result<GaussianSet> {
    let mut out = raw.clone();
    for (i, q) in out.rotation.iter_mut().enumerate() {
        let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 1e-12) || !norm.is_finite() {
            return Err(Error::Numerical {
                index: i,
                reason: format!("quaternion norm {norm} cannot be normalized"),
            });
        }
        q.iter_mut().for_each(|v| *v /= norm);
    }
    out.scale
        .iter_mut()
        .flatten()
        .for_each(|s| *s = s.exp());
    out.opacity.iter_mut().for_each(|o| *o = sigmoid(*o));
    out.color
        .iter_mut()
        .flatten()
        .for_each(|c| *c = sigmoid(*c));
    Ok(out)
}

/// Adjoint of [`activate`], given the raw input and the gradient w.r.t. its output.
pub fn activate_backward(raw: &GaussianSet, grad_out: &GaussianSet) -> GaussianSet {
    let mut g = grad_out.clone();
    for (gq, q) in g.rotation.iter_mut().zip(&raw.rotation) {
        let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        let qh = q.map(|v| v / norm);
        let dot: f64 = qh.iter().zip(gq.iter()).map(|(a, b)| a * b).sum();
        for c in 0..4 {
            gq[c] = (gq[c] - qh[c] * dot) / norm;
        }
    }
    for (gs, s) in g.scale.iter_mut().zip(&raw.scale) {
        for c in 0..3 {
            gs[c] *= s[c].exp();
        }
    }
    for (go, o) in g.opacity.iter_mut().zip(&raw.opacity) {
        let p = sigmoid(*o);
        *go *= p * (1.0 - p);
    }
    for (gc, c) in g.color.iter_mut().zip(&raw.color) {
        for ch in 0..3 {
            let p = sigmoid(c[ch]);
            gc[ch] *= p * (1.0 - p);
        }
    }
    g
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlendGrads {
    pub base: GaussianSet,
    pub deltas: Vec<GaussianDelta>,
    pub psi: Vec<f64>,
}

/// Adjoint of [`blend`].
pub fn blend_backward(
    model: &AvatarModel,
    psi: &[f64],
    grad_out: &GaussianSet,
) -> Result<BlendGrads> {
    check_dim("blendshape weights", model.num_blendshapes(), psi.len())?;
    grad_out.validate()?;
    check_dim("blend gradient", model.num_gaussians(), grad_out.len())?;
    let deltas = psi
        .iter()
        .map(|&w| GaussianDelta {
            position: scaled(&grad_out.position, w),
            rotation: scaled(&grad_out.rotation, w),
            color: scaled(&grad_out.color, w),
        })
        .collect();
    Ok(BlendGrads {
        base: grad_out.clone(),
        deltas,
        psi: blend_psi_grad(model, grad_out),
    })
}

/// `∂L/∂ψ_k = ⟨ΔG_k, ∂L/∂G⟩` over the blended channels.
pub fn blend_psi_grad(model: &AvatarModel, grad_out: &GaussianSet) -> Vec<f64> {
    model
        .deltas
        .iter()
        .map(|d| {
            dot_rows(&d.position, &grad_out.position)
                + dot_rows(&d.rotation, &grad_out.rotation)
                + dot_rows(&d.color, &grad_out.color)
        })
        .collect()
}

fn scaled<const D: usize>(rows: &[[f64; D]], w: f64) -> Vec<[f64; D]> {
    rows.iter().map(|r| r.map(|v| w * v)).collect()
}

fn dot_rows<const D: usize>(a: &[[f64; D]], b: &[[f64; D]]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .sum()
}

/// Frobenius norm of `VVᵀ − I`, where the rows of V are the flattened,
/// unit-normalized blendshapes.
pub fn orthogonality_metric(model: &AvatarModel) -> Result<f64> {
    let rows: Vec<Vec<f64>> = model
        .deltas
        .iter()
        .enumerate()
        .map(|(k, d)| {
            let v = d.flatten();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                Err(Error::DegenerateBasis(k))
            } else {
                Ok(v.into_iter().map(|x| x / norm).collect())
            }
        })
        .collect::<Result<_>>()?;
    Ok(gram_deviation(&rows))
}

pub(crate) fn gram_deviation(rows: &[Vec<f64>]) -> f64 {
    let mut sum = 0.0;
    for (i, a) in rows.iter().enumerate() {
        for (j, b) in rows.iter().enumerate() {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            sum += (dot - target).powi(2);
        }
    }
    sum.sqrt()
}
