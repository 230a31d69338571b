use super::binding::GaussianBindings;
use super::rig::{Mesh, ParametricHeadRig};
use super::tbn::TbnFrame;
use crate::error::{check_dim, Result};
use crate::gaussian::GaussianSet;
use crate::math::{arr3, quat_left_transpose_apply, quat_mul, vec3, Vec3};

/// Tangent frames of every face of one deformed mesh.
#[derive(Debug, Clone)]
pub struct DeformedFrames {
    pub frames: Vec<TbnFrame>,
    vertices: Vec<[f64; 3]>,
    faces: Vec<[u32; 3]>,
}

impl DeformedFrames {
    pub fn new(rig: &ParametricHeadRig, mesh: &Mesh) -> Result<Self> {
        check_dim("mesh vertices", rig.base_vertices.len(), mesh.vertices.len())?;
        let frames = rig
            .faces
            .iter()
            .enumerate()
            .map(|(fi, f)| {
                let v = f.map(|i| vec3(mesh.vertices[i as usize]));
                let uv = f.map(|i| rig.uv_coords[i as usize]);
                TbnFrame::new(fi, v, uv)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            frames,
            vertices: mesh.vertices.clone(),
            faces: rig.faces.clone(),
        })
    }

    /// Frames of the mesh the rig produces for parameters θ.
    pub fn from_params(rig: &ParametricHeadRig, theta: &[f64]) -> Result<Self> {
        Self::new(rig, &rig.evaluate(theta)?)
    }

    /// Barycentric point of a binding on the deformed surface.
    pub fn anchor(&self, triangle: u32, bary: [f64; 3]) -> Vec3 {
        let f = self.faces[triangle as usize];
        (0..3).fold(Vec3::zeros(), |acc, i| {
            acc + vec3(self.vertices[f[i] as usize]) * bary[i]
        })
    }

    /// `x_world = R x_tangent + t`, `q_world = quat(R) ⊗ q_tangent`; scale,
    /// opacity and color pass through.
    pub fn transform(&self, tangent: &GaussianSet, bindings: &GaussianBindings) -> Result<GaussianSet> {
        check_dim("bindings", tangent.len(), bindings.len())?;
        let mut out = tangent.clone();
        for i in 0..tangent.len() {
            let tri = bindings.triangle[i];
            let frame = &self.frames[tri as usize];
            let t = self.anchor(tri, bindings.barycentric[i]);
            out.position[i] = arr3(&(frame.r * vec3(tangent.position[i]) + t));
            out.rotation[i] = quat_mul(frame.rotation, tangent.rotation[i]);
        }
        Ok(out)
    }

    /// Adjoint of [`transform`](Self::transform); the mesh is a constant.
    pub fn transform_backward(&self, grad_world: &GaussianSet, bindings: &GaussianBindings) -> GaussianSet {
        let mut g = grad_world.clone();
        for i in 0..g.len() {
            let frame = &self.frames[bindings.triangle[i] as usize];
            g.position[i] = arr3(&(frame.r.transpose() * vec3(grad_world.position[i])));
            g.rotation[i] = quat_left_transpose_apply(frame.rotation, grad_world.rotation[i]);
        }
        g
    }
}
