use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use super::{FieldOracle, FieldSample};
use crate::body::NUM_PARTS;
use crate::error::{Error, Result};

pub const GRID_MAGIC: &[u8; 8] = b"HOIFGRID";
/// u_h, grad u_h (3), u_o, grad u_o (3), logits (14), rot row-major (9),
/// centers (5).
pub const GRID_CHANNELS: usize = 1 + 3 + 1 + 3 + NUM_PARTS + 9 + 5;

const HEADER_LEN: usize = 8 + 4 * 4 + 6 * 8;
const CH_LOGITS: usize = 8;
const CH_ROT: usize = CH_LOGITS + NUM_PARTS;
const CH_CENTERS: usize = CH_ROT + 9;

/// Fields sampled on a regular grid and trilinearly interpolated. See
/// `docs/grid_format.md` for the file layout.
#[derive(Clone, Debug, PartialEq)]
pub struct GridOracle {
    dims: [usize; 3],
    min: Vector3<f64>,
    max: Vector3<f64>,
    data: Vec<f32>,
}

impl GridOracle {
    pub fn new(dims: [usize; 3], min: Vector3<f64>, max: Vector3<f64>, data: Vec<f32>) -> Result<Self> {
        if dims.iter().any(|&n| n < 2) {
            return Err(Error::MalformedGrid("each axis needs at least two nodes".into()));
        }
        if (0..3).any(|k| !(max[k] > min[k]) || !min[k].is_finite() || !max[k].is_finite()) {
            return Err(Error::MalformedGrid(
                "bounding box must be finite with max > min".into(),
            ));
        }
        let expected = dims.iter().product::<usize>() * GRID_CHANNELS;
        if data.len() != expected {
            return Err(Error::MalformedGrid(format!(
                "expected {expected} values, found {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::MalformedGrid("non-finite value".into()));
        }
        Ok(Self { dims, min, max, data })
    }

    /// Samples `oracle` at every node of a `dims` grid spanning `[min, max]`.
    pub fn from_oracle(
        oracle: &dyn FieldOracle,
        min: Vector3<f64>,
        max: Vector3<f64>,
        dims: [usize; 3],
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(dims.iter().product::<usize>() * GRID_CHANNELS);
        let spacing = Self::spacing_of(dims, &min, &max);
        for ix in 0..dims[0] {
            for iy in 0..dims[1] {
                for iz in 0..dims[2] {
                    let p = min + Vector3::new(ix as f64, iy as f64, iz as f64).component_mul(&spacing);
                    data.extend(channels(&oracle.sample(&p)).iter().map(|&v| v as f32));
                }
            }
        }
        Self::new(dims, min, max, data)
    }

    fn spacing_of(dims: [usize; 3], min: &Vector3<f64>, max: &Vector3<f64>) -> Vector3<f64> {
        Vector3::from_fn(|k, _| (max[k] - min[k]) / (dims[k] - 1) as f64)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn bounds(&self) -> (Vector3<f64>, Vector3<f64>) {
        (self.min, self.max)
    }

    pub fn spacing(&self) -> Vector3<f64> {
        Self::spacing_of(self.dims, &self.min, &self.max)
    }

    fn node(&self, ix: usize, iy: usize, iz: usize) -> &[f32] {
        let i = ((ix * self.dims[1] + iy) * self.dims[2] + iz) * GRID_CHANNELS;
        &self.data[i..i + GRID_CHANNELS]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(GRID_MAGIC);
        for n in self.dims {
            out.extend_from_slice(&(n as u32).to_le_bytes());
        }
        out.extend_from_slice(&(GRID_CHANNELS as u32).to_le_bytes());
        for v in self.min.iter().chain(self.max.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..8] != GRID_MAGIC {
            return Err(Error::MalformedGrid("missing header".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
        let dims = [u32_at(8), u32_at(12), u32_at(16)];
        let channels = u32_at(20);
        if channels != GRID_CHANNELS {
            return Err(Error::MalformedGrid(format!(
                "expected {GRID_CHANNELS} channels, found {channels}"
            )));
        }
        let min = Vector3::new(f64_at(24), f64_at(32), f64_at(40));
        let max = Vector3::new(f64_at(48), f64_at(56), f64_at(64));
        let body = &bytes[HEADER_LEN..];
        let count = dims
            .iter()
            .try_fold(channels, |acc, &n| acc.checked_mul(n))
            .ok_or_else(|| Error::MalformedGrid("grid size overflows".into()))?;
        if body.len() != 4 * count {
            return Err(Error::MalformedGrid(format!(
                "expected {} data bytes, found {}",
                4 * count,
                body.len()
            )));
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Self::new(dims, min, max, data)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

fn channels(s: &FieldSample) -> [f64; GRID_CHANNELS] {
    let mut c = [0.0; GRID_CHANNELS];
    c[0] = s.u_h;
    c[1..4].copy_from_slice(s.grad_u_h.as_slice());
    c[4] = s.u_o;
    c[5..8].copy_from_slice(s.grad_u_o.as_slice());
    c[CH_LOGITS..CH_ROT].copy_from_slice(&s.part_logits);
    c[CH_ROT..CH_CENTERS].copy_from_slice(s.rot.transpose().as_slice());
    c[CH_CENTERS..].copy_from_slice(&s.centers);
    c
}

impl FieldOracle for GridOracle {
    fn sample(&self, p: &Vector3<f64>) -> FieldSample {
        let spacing = self.spacing();
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        let mut out_of_bounds = false;
        for k in 0..3 {
            let t = (p[k] - self.min[k]) / spacing[k];
            let last = (self.dims[k] - 1) as f64;
            let tc = if t.is_nan() { 0.0 } else { t.clamp(0.0, last) };
            out_of_bounds |= tc != t;
            let i = (tc.floor() as usize).min(self.dims[k] - 2);
            base[k] = i;
            frac[k] = tc - i as f64;
        }
        let mut value = [0.0; GRID_CHANNELS];
        let mut grad = [Vector3::zeros(); NUM_PARTS];
        for corner in 0..8 {
            let bit = [(corner >> 2) & 1, (corner >> 1) & 1, corner & 1];
            let w1 = |k: usize| if bit[k] == 1 { frac[k] } else { 1.0 - frac[k] };
            let dw = |k: usize| if bit[k] == 1 { 1.0 } else { -1.0 } / spacing[k];
            let w = w1(0) * w1(1) * w1(2);
            let dwdp = Vector3::new(dw(0) * w1(1) * w1(2), w1(0) * dw(1) * w1(2), w1(0) * w1(1) * dw(2));
            let node = self.node(base[0] + bit[0], base[1] + bit[1], base[2] + bit[2]);
            for (v, &n) in value.iter_mut().zip(node) {
                *v += w * n as f64;
            }
            if !out_of_bounds {
                for (j, g) in grad.iter_mut().enumerate() {
                    *g += dwdp * node[CH_LOGITS + j] as f64;
                }
            }
        }
        let unit = |v: Vector3<f64>| {
            let n = v.norm();
            if n > 1.0 {
                v / n
            } else {
                v
            }
        };
        let mut part_logits = [0.0; NUM_PARTS];
        part_logits.copy_from_slice(&value[CH_LOGITS..CH_ROT]);
        let mut centers = [0.0; 5];
        centers.copy_from_slice(&value[CH_CENTERS..]);
        FieldSample {
            u_h: value[0].max(0.0),
            grad_u_h: unit(Vector3::new(value[1], value[2], value[3])),
            u_o: value[4].max(0.0),
            grad_u_o: unit(Vector3::new(value[5], value[6], value[7])),
            part_logits,
            part_logit_grads: grad,
            rot: Matrix3::from_row_slice(&value[CH_ROT..CH_CENTERS]),
            centers,
            out_of_bounds,
        }
    }
}
