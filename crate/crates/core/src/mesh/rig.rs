use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::math::{arr3, axis_angle_matrix, vec3};

/// Synthetic stand-in for a morphable head model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParametricHeadRig {
    pub base_vertices: Vec<[f64; 3]>,
    pub faces: Vec<[u32; 3]>,
    pub uv_coords: Vec<[f64; 2]>,
    /// One per-vertex offset field per expression coefficient.
    pub expr_bases: Vec<Vec<[f64; 3]>>,
    /// Number of trailing parameters holding the global axis-angle rotation.
    pub pose_dim: usize,
}

/// Deformed vertex positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadRigConfig {
    pub segments: usize,
    pub rings: usize,
    pub radii: [f64; 3],
    pub expressions: usize,
    pub expression_amplitude: f64,
}

impl Default for HeadRigConfig {
    fn default() -> Self {
        Self {
            segments: 32,
            rings: 18,
            radii: [0.85, 1.0, 0.9],
            expressions: 10,
            expression_amplitude: 0.06,
        }
    }
}

impl ParametricHeadRig {
    /// Latitude-longitude ellipsoid with a nose bump. The UV seam runs down
    /// the back of the head; each pole is split into one vertex per segment
    /// so that every face keeps a non-degenerate UV triangle.
    pub fn synthetic(config: &HeadRigConfig) -> Self {
        let segs = config.segments;
        let rings = config.rings;
        let [rx, ry, rz] = config.radii;

        let surface = |lat: f64, lon: f64| -> [f64; 3] {
            let dir = [lat.sin() * lon.sin(), lat.cos(), -lat.sin() * lon.cos()];
            let dl = lon - PI;
            let dp = lat - PI / 2.0 - 0.1;
            let bump = 0.15 * (-(dl * dl) / 0.03 - (dp * dp) / 0.04).exp();
            [
                (rx + bump) * dir[0],
                (ry + bump) * dir[1],
                (rz + bump) * dir[2],
            ]
        };

        let mut verts = Vec::new();
        let mut uvs = Vec::new();
        let mut latlon = Vec::new();
        for j in 0..segs {
            let u = (j as f64 + 0.5) / segs as f64;
            verts.push(surface(0.0, 2.0 * PI * u));
            uvs.push([u, 0.0]);
            latlon.push((0.0, 2.0 * PI * u));
        }
        let ring_start = verts.len();
        for i in 1..=rings {
            let v = i as f64 / (rings + 1) as f64;
            let lat = PI * v;
            for j in 0..=segs {
                let u = j as f64 / segs as f64;
                let lon = 2.0 * PI * u;
                verts.push(surface(lat, lon));
                uvs.push([u, v]);
                latlon.push((lat, lon));
            }
        }
        let bottom_start = verts.len();
        for j in 0..segs {
            let u = (j as f64 + 0.5) / segs as f64;
            verts.push(surface(PI, 2.0 * PI * u));
            uvs.push([u, 1.0]);
            latlon.push((PI, 2.0 * PI * u));
        }

        let ring_idx = |i: usize, j: usize| (ring_start + (i - 1) * (segs + 1) + j) as u32;
        let mut faces = Vec::new();
        for j in 0..segs {
            faces.push([j as u32, ring_idx(1, j), ring_idx(1, j + 1)]);
        }
        for i in 1..rings {
            for j in 0..segs {
                let a = ring_idx(i, j);
                let b = ring_idx(i, j + 1);
                let c = ring_idx(i + 1, j);
                let d = ring_idx(i + 1, j + 1);
                faces.push([a, c, b]);
                faces.push([b, c, d]);
            }
        }
        for j in 0..segs {
            faces.push([
                ring_idx(rings, j),
                (bottom_start + j) as u32,
                ring_idx(rings, j + 1),
            ]);
        }
        // Outward winding.
        for f in &mut faces {
            let [a, b, c] = f.map(|i| vec3(verts[i as usize]));
            let n = (b - a).cross(&(c - a));
            if n.dot(&(a + b + c)) < 0.0 {
                f.swap(1, 2);
            }
        }

        let expr_bases = (0..config.expressions)
            .map(|e| {
                let ef = e as f64;
                let lon_freq = 1.0 + (e % 3) as f64;
                let lat_freq = 1.0 + (e / 3) as f64;
                let phase = 0.7 * ef;
                latlon
                    .iter()
                    .zip(&verts)
                    .map(|(&(lat, lon), p)| {
                        let front = (0.5 * (1.0 - lon.cos())).powi(2);
                        let w = config.expression_amplitude
                            * front
                            * (lon_freq * lon + phase).sin()
                            * (lat_freq * lat).sin();
                        let n = vec3(*p).normalize();
                        arr3(&(n * w))
                    })
                    .collect()
            })
            .collect();

        Self {
            base_vertices: verts,
            faces,
            uv_coords: uvs,
            expr_bases,
            pose_dim: 3,
        }
    }

    pub fn num_expressions(&self) -> usize {
        self.expr_bases.len()
    }

    /// H = expression count + pose dimension.
    pub fn param_dim(&self) -> usize {
        self.expr_bases.len() + self.pose_dim
    }

    pub fn validate(&self) -> Result<()> {
        let nv = self.base_vertices.len();
        check_dim("uv coordinates", nv, self.uv_coords.len())?;
        for (e, basis) in self.expr_bases.iter().enumerate() {
            if basis.len() != nv {
                return Err(Error::Config(format!(
                    "expression basis {e} has {} offsets for {nv} vertices",
                    basis.len()
                )));
            }
        }
        if self.pose_dim != 0 && self.pose_dim != 3 {
            return Err(Error::Config(format!(
                "pose_dim must be 0 or 3, got {}",
                self.pose_dim
            )));
        }
        for (fi, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&i| i as usize >= nv) {
                return Err(Error::Config(format!("face {fi} references a missing vertex")));
            }
            let [a, b, c] = f.map(|i| self.uv_coords[i as usize]);
            let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
            if det.abs() < 1e-12 {
                return Err(Error::DegenerateTriangle {
                    face: fi,
                    reason: "zero UV area",
                });
            }
        }
        Ok(())
    }

    /// `R(θ_pose) · (base + Σ_e θ_e · basis_e)`.
    pub fn evaluate(&self, theta: &[f64]) -> Result<Mesh> {
        check_dim("rig parameters", self.param_dim(), theta.len())?;
        let ne = self.num_expressions();
        let rot = if self.pose_dim == 3 {
            axis_angle_matrix([theta[ne], theta[ne + 1], theta[ne + 2]])
        } else {
            crate::math::Mat3::identity()
        };
        let vertices = (0..self.base_vertices.len())
            .map(|v| {
                let mut p = self.base_vertices[v];
                for (e, basis) in self.expr_bases.iter().enumerate() {
                    for c in 0..3 {
                        p[c] += theta[e] * basis[v][c];
                    }
                }
                arr3(&(rot * vec3(p)))
            })
            .collect();
        Ok(Mesh { vertices })
    }

    pub fn neutral_mesh(&self) -> Mesh {
        Mesh {
            vertices: self.base_vertices.clone(),
        }
    }

    /// Total area of the undeformed surface.
    pub fn surface_area(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let [a, b, c] = f.map(|i| vec3(self.base_vertices[i as usize]));
                0.5 * (b - a).cross(&(c - a)).norm()
            })
            .sum()
    }
}
