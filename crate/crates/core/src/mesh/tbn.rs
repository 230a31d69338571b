use crate::error::{Error, Result};
use crate::math::{matrix_to_quat, Mat3, Vec3};

/// Tangent frame of one deformed triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TbnFrame {
    /// Columns T, B, N. T and B are the raw solution of the UV system and are
    /// generally neither unit length nor orthogonal.
    pub r: Mat3,
    /// Rotation of the orthonormal frame (T̂, N × T̂, N), used to carry
    /// Gaussian orientations.
    pub rotation: [f64; 4],
}

/// TBN matrix of a triangle from its vertices and texture coordinates.
///
/// With `M = [[u1−u0, u2−u0], [v1−v0, v2−v0]]` and edges `e1 = v1−v0`,
/// `e2 = v2−v0`, the tangent and bitangent satisfy `[e1 e2] = [T B] M`.
pub fn tbn(face: usize, v: [Vec3; 3], uv: [[f64; 2]; 3]) -> Result<Mat3> {
    let m11 = uv[1][0] - uv[0][0];
    let m12 = uv[2][0] - uv[0][0];
    let m21 = uv[1][1] - uv[0][1];
    let m22 = uv[2][1] - uv[0][1];
    let det = m11 * m22 - m12 * m21;
    if det.abs() < 1e-12 {
        return Err(Error::DegenerateTriangle {
            face,
            reason: "singular UV matrix",
        });
    }
    let e1 = v[1] - v[0];
    let e2 = v[2] - v[0];
    let cross = e1.cross(&e2);
    let area2 = cross.norm();
    if !(area2 > 1e-12) {
        return Err(Error::DegenerateTriangle {
            face,
            reason: "zero 3D area",
        });
    }
    let n = cross / area2;
    let inv = 1.0 / det;
    let t = (e1 * m22 - e2 * m21) * inv;
    let b = (e2 * m11 - e1 * m12) * inv;
    Ok(Mat3::from_columns(&[t, b, n]))
}

/// Orthonormal rotation derived from a TBN matrix.
pub fn frame_rotation(r: &Mat3) -> [f64; 4] {
    let n: Vec3 = r.column(2).into();
    let t: Vec3 = r.column(0).into();
    let t = (t - n * n.dot(&t)).normalize();
    let b = n.cross(&t);
    matrix_to_quat(&Mat3::from_columns(&[t, b, n]))
}

impl TbnFrame {
    pub fn new(face: usize, v: [Vec3; 3], uv: [[f64; 2]; 3]) -> Result<Self> {
        let r = tbn(face, v, uv)?;
        Ok(Self {
            r,
            rotation: frame_rotation(&r),
        })
    }
}
