//! Depth-tested silhouette rasterization, the occlusion-aware mask loss, and
//! the Euclidean distance transform used to relax it.

use std::path::Path;

use nalgebra::{Vector2, Vector3};

use super::{PerspectiveCamera, TriangleMesh};
use crate::error::{Error, Result};

const NEAR_PLANE: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskSource {
    Observed,
    Rendered,
}

/// Binary per-pixel occupancy, row-major, `true` = foreground.
#[derive(Clone, Debug, PartialEq)]
pub struct SilhouetteMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
    pub source: MaskSource,
}

impl SilhouetteMask {
    pub fn empty(width: usize, height: usize, source: MaskSource) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
            source,
        }
    }

    pub fn from_fn(width: usize, height: usize, source: MaskSource, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut m = Self::empty(width, height, source);
        for y in 0..height {
            for x in 0..width {
                m.data[y * width + x] = f(x, y);
            }
        }
        m
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = value;
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn matches_camera(&self, camera: &PerspectiveCamera) -> bool {
        self.width == camera.width && self.height == camera.height
    }

    pub fn union(&self, other: &SilhouetteMask) -> Result<SilhouetteMask> {
        check_dims(self, other)?;
        Ok(SilhouetteMask {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a || *b).collect(),
            source: self.source,
        })
    }

    /// Binary PGM (P5), 0 = background, 255 = foreground.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.data.iter().map(|&b| if b { 255u8 } else { 0u8 }));
        out
    }

    /// Any non-zero pixel is foreground.
    pub fn from_pgm(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut fields = Vec::with_capacity(4);
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && (bytes[pos] as char).is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !(bytes[pos] as char).is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err("truncated PGM header".into());
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        if fields[0] != "P5" {
            return Err(format!("expected binary PGM magic P5, found {}", fields[0]));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| format!("bad PGM header value `{s}`"));
        let (w, h, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
        if maxval == 0 || maxval > 255 {
            return Err("only 8-bit PGM masks are supported".into());
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let raster = bytes.get(pos..pos + w * h).ok_or("truncated PGM raster")?;
        Ok(Self {
            width: w,
            height: h,
            data: raster.iter().map(|&v| v != 0).collect(),
            source: MaskSource::Observed,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_pgm(&bytes).map_err(|r| Error::parse(path, r))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_pgm()).map_err(|e| Error::io(path, e))
    }
}

fn check_dims(a: &SilhouetteMask, b: &SilhouetteMask) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch {
            expected: a.dims(),
            actual: b.dims(),
        });
    }
    Ok(())
}

/// A rendered silhouette with its z-buffer (`f64::INFINITY` where empty).
#[derive(Clone, Debug, PartialEq)]
pub struct Rendering {
    pub mask: SilhouetteMask,
    pub depth: Vec<f64>,
}

impl Rendering {
    pub fn depth_at(&self, x: usize, y: usize) -> f64 {
        self.depth[y * self.mask.width + x]
    }
}

/// Rasterizes every triangle, both windings, sampling once at each pixel
/// center with a nearest-depth test.
pub fn render_silhouette(mesh: &TriangleMesh, camera: &PerspectiveCamera) -> Result<Rendering> {
    if !mesh.vertices().iter().any(|v| v.z > 0.0) {
        return Err(Error::FullyBehindCamera);
    }
    let (w, h) = (camera.width, camera.height);
    let mut depth = vec![f64::INFINITY; w * h];
    for f in 0..mesh.faces().len() {
        let tri = mesh.triangle(f);
        for poly in clip_near(&tri).windows_fan() {
            rasterize_triangle(camera, &poly, &mut depth);
        }
    }
    let mask = SilhouetteMask {
        width: w,
        height: h,
        data: depth.iter().map(|d| d.is_finite()).collect(),
        source: MaskSource::Rendered,
    };
    Ok(Rendering { mask, depth })
}

struct Clipped {
    verts: [Vector3<f64>; 4],
    len: usize,
}

impl Clipped {
    fn windows_fan(&self) -> impl Iterator<Item = [Vector3<f64>; 3]> + '_ {
        (1..self.len.saturating_sub(1)).map(move |k| [self.verts[0], self.verts[k], self.verts[k + 1]])
    }
}

/// Sutherland-Hodgman against z = NEAR_PLANE. A triangle clips to at most a
/// quad.
fn clip_near(tri: &[Vector3<f64>; 3]) -> Clipped {
    let mut out = Clipped {
        verts: [Vector3::zeros(); 4],
        len: 0,
    };
    for i in 0..3 {
        let a = tri[i];
        let b = tri[(i + 1) % 3];
        let a_in = a.z >= NEAR_PLANE;
        let b_in = b.z >= NEAR_PLANE;
        if a_in {
            out.verts[out.len] = a;
            out.len += 1;
        }
        if a_in != b_in {
            let t = (NEAR_PLANE - a.z) / (b.z - a.z);
            out.verts[out.len] = a + (b - a) * t;
            out.len += 1;
        }
    }
    out
}

fn rasterize_triangle(camera: &PerspectiveCamera, tri: &[Vector3<f64>; 3], depth: &mut [f64]) {
    let p = tri.map(|v| camera.project_unchecked(&v));
    let area = edge(&p[0], &p[1], &p[2]);
    if area.abs() < 1e-12 {
        return;
    }
    let (w, h) = (camera.width as f64, camera.height as f64);
    let min_x = p.iter().map(|q| q.x).fold(f64::INFINITY, f64::min);
    let max_x = p.iter().map(|q| q.x).fold(f64::NEG_INFINITY, f64::max);
    let min_y = p.iter().map(|q| q.y).fold(f64::INFINITY, f64::min);
    let max_y = p.iter().map(|q| q.y).fold(f64::NEG_INFINITY, f64::max);
    if max_x < 0.0 || max_y < 0.0 || min_x > w || min_y > h {
        return;
    }
    // pixel (i, j) is sampled at (i + 0.5, j + 0.5)
    let x0 = (min_x - 0.5).ceil().max(0.0) as usize;
    let x1 = ((max_x - 0.5).floor().min(w - 1.0)).max(-1.0);
    let y0 = (min_y - 0.5).ceil().max(0.0) as usize;
    let y1 = ((max_y - 0.5).floor().min(h - 1.0)).max(-1.0);
    if x1 < 0.0 || y1 < 0.0 {
        return;
    }
    let (x1, y1) = (x1 as usize, y1 as usize);
    let inv_z = tri.map(|v| 1.0 / v.z);
    let stride = camera.width;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let s = Vector2::new(x as f64 + 0.5, y as f64 + 0.5);
            let l0 = edge(&p[1], &p[2], &s) / area;
            let l1 = edge(&p[2], &p[0], &s) / area;
            let l2 = 1.0 - l0 - l1;
            if l0 < 0.0 || l1 < 0.0 || l2 < 0.0 {
                continue;
            }
            // 1/z is affine in screen space
            let z = 1.0 / (l0 * inv_z[0] + l1 * inv_z[1] + l2 * inv_z[2]);
            let slot = &mut depth[y * stride + x];
            if z < *slot {
                *slot = z;
            }
        }
    }
}

#[inline]
fn edge(a: &Vector2<f64>, b: &Vector2<f64>, c: &Vector2<f64>) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Pixel-count discrepancy between a rendered object silhouette and the
/// observed object mask. Pixels the object covers but the observation lacks
/// are excused inside the observed human mask, where the person may hide the
/// object.
pub fn occlusion_aware_silhouette_loss(
    rendered: &Rendering,
    observed_object: &SilhouetteMask,
    observed_human: &SilhouetteMask,
) -> Result<f64> {
    check_dims(&rendered.mask, observed_object)?;
    check_dims(&rendered.mask, observed_human)?;
    let r = rendered.mask.data();
    let o = observed_object.data();
    let hum = observed_human.data();
    let mut loss = 0.0;
    for i in 0..r.len() {
        let penalized = match (r[i], o[i]) {
            (true, false) => !hum[i],
            (false, true) => true,
            _ => false,
        };
        if penalized {
            loss += 1.0;
        }
    }
    Ok(loss)
}

/// Euclidean distance (in pixels, between pixel centers) from every pixel to
/// the nearest foreground pixel; zero on the foreground, `f64::INFINITY`
/// everywhere when the mask is empty. Felzenszwalb-Huttenlocher separable
/// squared EDT.
pub fn distance_transform(mask: &SilhouetteMask) -> Vec<f64> {
    let (w, h) = mask.dims();
    let inf = f64::INFINITY;
    let mut grid: Vec<f64> = mask.data().iter().map(|&b| if b { 0.0 } else { inf }).collect();
    let mut buf = vec![0.0; w.max(h)];
    let mut out = vec![0.0; w.max(h)];
    for x in 0..w {
        for y in 0..h {
            buf[y] = grid[y * w + x];
        }
        edt_1d(&buf[..h], &mut out[..h]);
        for y in 0..h {
            grid[y * w + x] = out[y];
        }
    }
    for y in 0..h {
        buf[..w].copy_from_slice(&grid[y * w..(y + 1) * w]);
        edt_1d(&buf[..w], &mut out[..w]);
        grid[y * w..(y + 1) * w].copy_from_slice(&out[..w]);
    }
    grid.iter().map(|d| d.sqrt()).collect()
}

fn edt_1d(f: &[f64], d: &mut [f64]) {
    let n = f.len();
    let finite: Vec<usize> = (0..n).filter(|&q| f[q].is_finite()).collect();
    if finite.is_empty() {
        d.iter_mut().for_each(|x| *x = f64::INFINITY);
        return;
    }
    // lower envelope of parabolas rooted at finite samples
    let mut v = vec![0usize; finite.len()];
    let mut z = vec![0.0f64; finite.len() + 1];
    let mut k = 0;
    v[0] = finite[0];
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let intersect =
        |q: usize, p: usize| ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
    for &q in &finite[1..] {
        // z[0] = -inf stops the pop loop at the first parabola
        let mut s = intersect(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = intersect(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    let mut k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let dq = q as f64 - v[k] as f64;
        *out = dq * dq + f[v[k]];
    }
}

/// Bilinear sample of a row-major field at continuous pixel coordinates
/// (pixel centers at `i + 0.5`), clamped to the border. Returns the value
/// and its gradient with respect to the coordinates.
pub fn sample_bilinear(field: &[f64], width: usize, height: usize, at: &Vector2<f64>) -> (f64, Vector2<f64>) {
    let fx = (at.x - 0.5).clamp(0.0, (width - 1) as f64);
    let fy = (at.y - 0.5).clamp(0.0, (height - 1) as f64);
    let x0 = (fx.floor() as usize).min(width.saturating_sub(2));
    let y0 = (fy.floor() as usize).min(height.saturating_sub(2));
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let tx = fx - x0 as f64;
    let ty = fy - y0 as f64;
    let v00 = field[y0 * width + x0];
    let v10 = field[y0 * width + x1];
    let v01 = field[y1 * width + x0];
    let v11 = field[y1 * width + x1];
    let value = v00 * (1.0 - tx) * (1.0 - ty) + v10 * tx * (1.0 - ty) + v01 * (1.0 - tx) * ty + v11 * tx * ty;
    let inside_x = at.x - 0.5 > 0.0 && at.x - 0.5 < (width - 1) as f64;
    let inside_y = at.y - 0.5 > 0.0 && at.y - 0.5 < (height - 1) as f64;
    let gx = if inside_x {
        (v10 - v00) * (1.0 - ty) + (v11 - v01) * ty
    } else {
        0.0
    };
    let gy = if inside_y {
        (v01 - v00) * (1.0 - tx) + (v11 - v10) * tx
    } else {
        0.0
    };
    (value, Vector2::new(gx, gy))
}
