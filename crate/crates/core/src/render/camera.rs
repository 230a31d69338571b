use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Mat3, Vec3};

/// Pinhole camera. Pixel centres sit at half-integer coordinates; `x` grows
/// right and `y` down, with the camera looking along `+z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// World-to-camera rotation, row-major.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub width: u32,
    pub height: u32,
}

impl Camera {
    /// Camera at `(0, 0, distance)` looking at the origin with `+y` up in the image.
    pub fn looking_at_origin(distance: f64, focal: f64, width: u32, height: u32) -> Self {
        Self {
            fx: focal,
            fy: focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            rotation: [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]],
            translation: [0.0, 0.0, distance],
            width,
            height,
        }
    }

    /// Same camera after orbiting the scene by `yaw` radians about the world y axis.
    pub fn orbit_yaw(&self, yaw: f64) -> Self {
        let (s, c) = yaw.sin_cos();
        let orbit = Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c);
        let r = self.rotation_matrix() * orbit;
        let mut out = *self;
        out.rotation = [
            [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
            [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
            [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
        ];
        out
    }

    pub fn rotation_matrix(&self) -> Mat3 {
        let r = &self.rotation;
        Mat3::new(
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        )
    }

    pub fn world_to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation_matrix() * p + Vec3::from(self.translation)
    }

    pub fn num_pixels(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::Config("focal lengths must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("image size must be non-zero".into()));
        }
        let r = self.rotation_matrix();
        if (r.transpose() * r - Mat3::identity()).norm() > 1e-9 {
            return Err(Error::Config("camera rotation is not orthonormal".into()));
        }
        Ok(())
    }
}

/// Row-major RGB image with `f64` channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    pub data: Vec<[f64; 3]>,
}

impl Image {
    pub fn filled(width: u32, height: u32, value: [f64; 3]) -> Self {
        Self {
            width,
            height,
            data: vec![value; width as usize * height as usize],
        }
    }

    pub fn get(&self, x: u32, y: u32) -> [f64; 3] {
        self.data[y as usize * self.width as usize + x as usize]
    }
}

/// Row-major RGBA image with straight (non-premultiplied) alpha.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbaImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<[f64; 4]>,
}

impl RgbaImage {
    /// Composites over a constant background colour.
    pub fn over(&self, background: [f64; 3]) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .map(|p| {
                    let a = p[3];
                    [
                        p[0] * a + background[0] * (1.0 - a),
                        p[1] * a + background[1] * (1.0 - a),
                        p[2] * a + background[2] * (1.0 - a),
                    ]
                })
                .collect(),
        }
    }
}
