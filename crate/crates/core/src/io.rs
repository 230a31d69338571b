//! On-disk formats: PNG frames, sequence directories and the binary model file.
//!
//! # Model file layout
//!
//! All integers are `u32` and all reals `f64`, little-endian.
//!
//! | offset | content |
//! |---|---|
//! | 0 | magic `b"RGBA"` |
//! | 4 | version (= 1) |
//! | 8 | N (Gaussians) |
//! | 12 | K (blendshapes) |
//! | 16 | H (rig parameters) |
//! | 20 | hidden width of the MLP |
//! | 24 | driver (0 = MLP, 1 = identity slice) |
//! | 28 | base: position N×3, rotation N×4, scale N×3, opacity N, color N×3 |
//! | | per blendshape: position N×3, rotation N×4, color N×3 |
//! | | MLP layers 1..3: weight (out×in, row-major) then bias |
//! | | bindings: triangle N×u32, barycentric N×3 |
//! | | visited flags: ⌈N/8⌉ bytes, bit `i % 8` of byte `i / 8` |
//!
//! The file must end exactly after the visited flags.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::avatar::{AvatarModel, Dense, Driver, MlpWeights};
use crate::color_init::ColorInitState;
use crate::dataset::{Frame, SequenceDataset};
use crate::error::{Error, Result};
use crate::gaussian::{GaussianDelta, GaussianSet};
use crate::mesh::{GaussianBindings, ParametricHeadRig};
use crate::render::{Camera, RgbaImage};

pub const MODEL_MAGIC: &[u8; 4] = b"RGBA";
pub const MODEL_VERSION: u32 = 1;
const HEADER_LEN: usize = 28;

pub fn read_png(path: &Path) -> Result<RgbaImage> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let decoder = png::Decoder::new(std::io::BufReader::new(file));
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::format(path, e.to_string()))?;
    let info = reader.info();
    if info.color_type != png::ColorType::Rgba || info.bit_depth != png::BitDepth::Eight {
        return Err(Error::format(
            path,
            format!("expected 8-bit RGBA, found {:?} {:?}", info.color_type, info.bit_depth),
        ));
    }
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let data = buf[..frame.buffer_size()]
        .chunks_exact(4)
        .map(|p| std::array::from_fn(|i| p[i] as f64 / 255.0))
        .collect();
    Ok(RgbaImage {
        width: frame.width,
        height: frame.height,
        data,
    })
}

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_png(path: &Path, image: &RgbaImage) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(std::io::BufWriter::new(file), image.width, image.height);
    encoder.set_color(png::ColorType::Rgba);
    encoder.set_depth(png::BitDepth::Eight);
    let bytes: Vec<u8> = image.data.iter().flatten().map(|v| quantize(*v)).collect();
    let mut writer = encoder
        .write_header()
        .map_err(|e| Error::format(path, e.to_string()))?;
    writer
        .write_image_data(&bytes)
        .map_err(|e| Error::format(path, e.to_string()))?;
    writer.finish().map_err(|e| Error::format(path, e.to_string()))
}

/// Writes an opaque RGB image.
pub fn write_rgb_png(path: &Path, image: &crate::render::Image) -> Result<()> {
    write_png(
        path,
        &RgbaImage {
            width: image.width,
            height: image.height,
            data: image.data.iter().map(|p| [p[0], p[1], p[2], 1.0]).collect(),
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceParams {
    pub camera: Camera,
    /// Rig parameter count H.
    pub param_dim: usize,
    /// One θ per frame.
    pub theta: Vec<Vec<f64>>,
    /// Rig file, relative to the sequence directory.
    pub rig: String,
}

pub fn frame_path(dir: &Path, index: usize) -> PathBuf {
    dir.join("frames").join(format!("{index:06}.png"))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn save_sequence(dir: &Path, dataset: &SequenceDataset) -> Result<()> {
    dataset.validate()?;
    let frames_dir = dir.join("frames");
    fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
    write_json(&dir.join("rig.json"), &dataset.rig)?;
    let params = SequenceParams {
        camera: dataset.camera,
        param_dim: dataset.rig.param_dim(),
        theta: dataset.frames.iter().map(|f| f.theta.clone()).collect(),
        rig: "rig.json".into(),
    };
    write_json(&dir.join("params.json"), &params)?;
    for (i, f) in dataset.frames.iter().enumerate() {
        write_png(&frame_path(dir, i), &f.image)?;
    }
    Ok(())
}

pub fn load_sequence(dir: &Path) -> Result<SequenceDataset> {
    let params_path = dir.join("params.json");
    let params: SequenceParams = read_json(&params_path)?;
    let rig_path = dir.join(&params.rig);
    let rig: ParametricHeadRig = read_json(&rig_path)?;
    rig.validate()
        .map_err(|e| Error::format(&rig_path, e.to_string()))?;
    if rig.param_dim() != params.param_dim {
        return Err(Error::format(
            &params_path,
            format!(
                "param_dim is {} but the rig takes {} parameters",
                params.param_dim,
                rig.param_dim()
            ),
        ));
    }
    for (i, t) in params.theta.iter().enumerate() {
        if t.len() != params.param_dim {
            return Err(Error::format(
                &params_path,
                format!("theta[{i}] has {} entries, expected {}", t.len(), params.param_dim),
            ));
        }
        if let Some(j) = t.iter().position(|v| !v.is_finite()) {
            return Err(Error::format(&params_path, format!("theta[{i}][{j}] is not finite")));
        }
    }
    params
        .camera
        .validate()
        .map_err(|e| Error::format(&params_path, e.to_string()))?;
    let frames_dir = dir.join("frames");
    let on_disk = fs::read_dir(&frames_dir)
        .map_err(|e| Error::io(&frames_dir, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "png"))
        .count();
    if on_disk != params.theta.len() {
        return Err(Error::format(
            &frames_dir,
            format!("{on_disk} frames on disk but params.json lists {}", params.theta.len()),
        ));
    }
    let mut frames = Vec::with_capacity(params.theta.len());
    for (i, theta) in params.theta.into_iter().enumerate() {
        let path = frame_path(dir, i);
        let image = read_png(&path)?;
        if image.width != params.camera.width || image.height != params.camera.height {
            return Err(Error::format(
                &path,
                format!(
                    "image is {}x{}, camera is {}x{}",
                    image.width, image.height, params.camera.width, params.camera.height
                ),
            ));
        }
        frames.push(Frame { theta, image });
    }
    if frames.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(SequenceDataset {
        rig,
        camera: params.camera,
        frames,
    })
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn reals<'a>(&mut self, vals: impl IntoIterator<Item = &'a f64>) {
        for v in vals {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
}

pub fn encode_model(model: &AvatarModel, state: &ColorInitState) -> Result<Vec<u8>> {
    model.validate()?;
    let n = model.num_gaussians();
    if state.visited.len() != n {
        return Err(Error::Dimension {
            what: "visited flags",
            expected: n,
            got: state.visited.len(),
        });
    }
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MODEL_MAGIC);
    w.u32(MODEL_VERSION as usize);
    w.u32(n);
    w.u32(model.num_blendshapes());
    w.u32(model.param_dim());
    w.u32(model.mlp.hidden_dim());
    w.u32(match model.driver {
        Driver::Mlp => 0,
        Driver::IdentitySlice => 1,
    });
    let b = &model.base;
    w.reals(b.position.iter().flatten());
    w.reals(b.rotation.iter().flatten());
    w.reals(b.scale.iter().flatten());
    w.reals(&b.opacity);
    w.reals(b.color.iter().flatten());
    for d in &model.deltas {
        w.reals(d.position.iter().flatten());
        w.reals(d.rotation.iter().flatten());
        w.reals(d.color.iter().flatten());
    }
    for layer in &model.mlp.layers {
        w.reals(&layer.weight);
        w.reals(&layer.bias);
    }
    for &t in &model.bindings.triangle {
        w.u32(t as usize);
    }
    w.reals(model.bindings.barycentric.iter().flatten());
    let mut bits = vec![0u8; n.div_ceil(8)];
    for (i, &v) in state.visited.iter().enumerate() {
        if v {
            bits[i / 8] |= 1 << (i % 8);
        }
    }
    w.0.extend_from_slice(&bits);
    Ok(w.0)
}

/// Expected file length for the given header values.
pub fn model_file_len(n: usize, k: usize, h: usize, hidden: usize) -> usize {
    let reals = n * 14 + k * n * 10 + (hidden * h + hidden) + (hidden * hidden + hidden) + (k * hidden + k) + n * 3;
    HEADER_LEN + reals * 8 + n * 4 + n.div_ceil(8)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn u32(&mut self) -> u32 {
        let v = u32::from_le_bytes(self.bytes[self.pos..self.pos + 4].try_into().unwrap());
        self.pos += 4;
        v
    }
    fn real(&mut self) -> f64 {
        let v = f64::from_le_bytes(self.bytes[self.pos..self.pos + 8].try_into().unwrap());
        self.pos += 8;
        v
    }
    fn rows<const D: usize>(&mut self, n: usize) -> Vec<[f64; D]> {
        (0..n).map(|_| std::array::from_fn(|_| self.real())).collect()
    }
    fn reals(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.real()).collect()
    }
}

pub fn decode_model(path: &Path, bytes: &[u8]) -> Result<(AvatarModel, ColorInitState)> {
    if bytes.len() < 8 {
        return Err(Error::format(path, "file too short for a model header"));
    }
    if &bytes[..4] != MODEL_MAGIC {
        return Err(Error::format(path, "bad magic, not a model file"));
    }
    let mut r = Reader { bytes, pos: 4 };
    let version = r.u32();
    if version != MODEL_VERSION {
        return Err(Error::format(path, format!("unsupported model version {version}")));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(path, "truncated header"));
    }
    let [n, k, h, hidden, driver] = std::array::from_fn(|_| r.u32() as usize);
    let driver = match driver {
        0 => Driver::Mlp,
        1 => Driver::IdentitySlice,
        d => return Err(Error::format(path, format!("unknown driver code {d}"))),
    };
    let expected = model_file_len(n, k, h, hidden);
    if bytes.len() != expected {
        return Err(Error::format(
            path,
            format!("length {} does not match {expected} implied by the header", bytes.len()),
        ));
    }
    let base = GaussianSet {
        position: r.rows(n),
        rotation: r.rows(n),
        scale: r.rows(n),
        opacity: r.reals(n),
        color: r.rows(n),
    };
    let deltas = (0..k)
        .map(|_| GaussianDelta {
            position: r.rows(n),
            rotation: r.rows(n),
            color: r.rows(n),
        })
        .collect();
    let mut dense = |i: usize, o: usize| Dense {
        in_dim: i,
        out_dim: o,
        weight: r.reals(i * o),
        bias: r.reals(o),
    };
    let layers = [dense(h, hidden), dense(hidden, hidden), dense(hidden, k)];
    let triangle = (0..n).map(|_| r.u32()).collect();
    let barycentric = r.rows(n);
    let visited = (0..n)
        .map(|i| bytes[r.pos + i / 8] & (1 << (i % 8)) != 0)
        .collect();
    let model = AvatarModel {
        base,
        deltas,
        mlp: MlpWeights { layers },
        bindings: GaussianBindings {
            triangle,
            barycentric,
        },
        driver,
    };
    model
        .validate()
        .map_err(|e| Error::format(path, e.to_string()))?;
    Ok((model, ColorInitState { visited, ..ColorInitState::new(0) }))
}

pub fn save_model(path: &Path, model: &AvatarModel, state: &ColorInitState) -> Result<()> {
    let bytes = encode_model(model, state)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<(AvatarModel, ColorInitState)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(path, &bytes)
}
