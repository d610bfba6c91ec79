use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Triangles with a doubled area below this are treated as degenerate.
const MIN_DOUBLE_AREA: f64 = 1e-15;

/// Indexed triangle surface. Coordinates are meters in camera space.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vector3<f64>>,
    faces: Vec<[usize; 3]>,
}

impl TriangleMesh {
    /// Validates indices, finiteness and rejects zero-area faces.
    pub fn new(vertices: Vec<Vector3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = Self { vertices, faces };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Point cloud without faces; supports metrics but not closest-point or
    /// raster queries.
    pub fn from_points(vertices: Vec<Vector3<f64>>) -> Result<Self> {
        Self::new(vertices, Vec::new())
    }

    fn validate(&self) -> Result<()> {
        if let Some(i) = self.vertices.iter().position(|v| !v.iter().all(|x| x.is_finite())) {
            return Err(Error::InvalidMesh(format!("vertex {i} is not finite")));
        }
        let n = self.vertices.len();
        for (fi, f) in self.faces.iter().enumerate() {
            if let Some(&bad) = f.iter().find(|&&i| i >= n) {
                return Err(Error::InvalidMesh(format!(
                    "face {fi} references vertex {bad} but only {n} vertices exist"
                )));
            }
            let [a, b, c] = f.map(|i| self.vertices[i]);
            if (b - a).cross(&(c - a)).norm() < MIN_DOUBLE_AREA {
                return Err(Error::InvalidMesh(format!("face {fi} is degenerate")));
            }
        }
        Ok(())
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn triangle(&self, face: usize) -> [Vector3<f64>; 3] {
        self.faces[face].map(|i| self.vertices[i])
    }

    /// Same connectivity with new vertex positions. Faces are not re-checked
    /// for degeneracy; posed meshes may pass through thin configurations.
    pub fn with_vertices(&self, vertices: Vec<Vector3<f64>>) -> Self {
        assert_eq!(vertices.len(), self.vertices.len(), "vertex count must not change");
        Self {
            vertices,
            faces: self.faces.clone(),
        }
    }

    pub fn map_vertices(&self, f: impl Fn(&Vector3<f64>) -> Vector3<f64>) -> Self {
        self.with_vertices(self.vertices.iter().map(f).collect())
    }

    /// `x -> scale * (rotation * x + translation)`.
    pub fn transformed(&self, rotation: &Matrix3<f64>, translation: &Vector3<f64>, scale: f64) -> Self {
        self.map_vertices(|v| scale * (rotation * v + translation))
    }

    pub fn centroid(&self) -> Vector3<f64> {
        if self.vertices.is_empty() {
            return Vector3::zeros();
        }
        self.vertices.iter().sum::<Vector3<f64>>() / self.vertices.len() as f64
    }

    pub fn bounds(&self) -> Option<(Vector3<f64>, Vector3<f64>)> {
        let first = *self.vertices.first()?;
        Some(
            self.vertices
                .iter()
                .fold((first, first), |(lo, hi), v| (lo.inf(v), hi.sup(v))),
        )
    }

    /// Vertex lists concatenated, faces of `other` re-indexed.
    pub fn merged(&self, other: &TriangleMesh) -> Self {
        let offset = self.vertices.len();
        let mut vertices = self.vertices.clone();
        vertices.extend_from_slice(&other.vertices);
        let mut faces = self.faces.clone();
        faces.extend(other.faces.iter().map(|f| f.map(|i| i + offset)));
        Self { vertices, faces }
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len())
            .map(|f| {
                let [a, b, c] = self.triangle(f);
                0.5 * (b - a).cross(&(c - a)).norm()
            })
            .sum()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let (vertices, faces) = match ext.as_deref() {
            Some("obj") => parse_obj(&text).map_err(|r| Error::parse(path, r))?,
            Some("ply") => parse_ply(&text).map_err(|r| Error::parse(path, r))?,
            _ => return Err(Error::parse(path, "expected a .obj or .ply file")),
        };
        Self::new(vertices, faces).map_err(|e| Error::parse(path, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        let text = match ext.as_deref() {
            Some("obj") => self.to_obj(),
            Some("ply") => self.to_ply(),
            _ => return Err(Error::parse(path, "expected a .obj or .ply file")),
        };
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn to_obj(&self) -> String {
        let mut s = String::new();
        for v in &self.vertices {
            let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
        }
        for f in &self.faces {
            let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
        s
    }

    pub fn to_ply(&self) -> String {
        let mut s = String::new();
        s.push_str("ply\nformat ascii 1.0\n");
        let _ = writeln!(s, "element vertex {}", self.vertices.len());
        s.push_str("property double x\nproperty double y\nproperty double z\n");
        let _ = writeln!(s, "element face {}", self.faces.len());
        s.push_str("property list uchar int vertex_indices\nend_header\n");
        for v in &self.vertices {
            let _ = writeln!(s, "{} {} {}", v.x, v.y, v.z);
        }
        for f in &self.faces {
            let _ = writeln!(s, "3 {} {} {}", f[0], f[1], f[2]);
        }
        s
    }
}

type Parsed = std::result::Result<(Vec<Vector3<f64>>, Vec<[usize; 3]>), String>;

fn parse_vec3<'a>(mut it: impl Iterator<Item = &'a str>, lineno: usize) -> std::result::Result<Vector3<f64>, String> {
    let mut v = Vector3::zeros();
    for k in 0..3 {
        let tok = it
            .next()
            .ok_or_else(|| format!("line {lineno}: expected 3 coordinates"))?;
        v[k] = tok
            .parse()
            .map_err(|_| format!("line {lineno}: bad coordinate `{tok}`"))?;
    }
    Ok(v)
}

fn parse_obj(text: &str) -> Parsed {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => vertices.push(parse_vec3(it, lineno)?),
            Some("f") => {
                let idx: Vec<usize> = it
                    .map(|tok| {
                        let head = tok.split('/').next().unwrap_or("");
                        let raw: i64 = head
                            .parse()
                            .map_err(|_| format!("line {lineno}: bad face index `{tok}`"))?;
                        let n = vertices.len() as i64;
                        let resolved = if raw < 0 { n + raw } else { raw - 1 };
                        if resolved < 0 {
                            return Err(format!("line {lineno}: face index {raw} out of range"));
                        }
                        Ok(resolved as usize)
                    })
                    .collect::<std::result::Result<_, _>>()?;
                if idx.len() < 3 {
                    return Err(format!("line {lineno}: face needs at least 3 vertices"));
                }
                // fan-triangulate polygons
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Ok((vertices, faces))
}

fn parse_ply(text: &str) -> Parsed {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err("missing `ply` magic".into()),
    }
    let mut n_vertices = None;
    let mut n_faces = 0usize;
    let mut vertex_props: Vec<String> = Vec::new();
    let mut current = "";
    for (i, line) in lines.by_ref() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", fmt, ..] if *fmt != "ascii" => {
                return Err(format!("unsupported PLY format `{fmt}` (ASCII only)"))
            }
            ["element", "vertex", n] => {
                current = "vertex";
                n_vertices = Some(n.parse().map_err(|_| format!("line {}: bad count", i + 1))?);
            }
            ["element", "face", n] => {
                current = "face";
                n_faces = n.parse().map_err(|_| format!("line {}: bad count", i + 1))?;
            }
            ["element", ..] => current = "other",
            ["property", .., name] if current == "vertex" => vertex_props.push(name.to_string()),
            ["end_header"] => break,
            _ => {}
        }
    }
    let n_vertices = n_vertices.ok_or("missing vertex element")?;
    let pos = |name: &str| {
        vertex_props
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| format!("vertex property `{name}` missing"))
    };
    let (ix, iy, iz) = (pos("x")?, pos("y")?, pos("z")?);
    let mut vertices = Vec::with_capacity(n_vertices);
    let mut faces = Vec::with_capacity(n_faces);
    for _ in 0..n_vertices {
        let (i, line) = lines.next().ok_or("truncated vertex list")?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| format!("line {}: bad number `{t}`", i + 1)))
            .collect::<std::result::Result<_, _>>()?;
        if vals.len() < vertex_props.len() {
            return Err(format!("line {}: expected {} values", i + 1, vertex_props.len()));
        }
        vertices.push(Vector3::new(vals[ix], vals[iy], vals[iz]));
    }
    for _ in 0..n_faces {
        let (i, line) = lines.next().ok_or("truncated face list")?;
        let vals: Vec<usize> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| format!("line {}: bad index `{t}`", i + 1)))
            .collect::<std::result::Result<_, _>>()?;
        let (&count, idx) = vals
            .split_first()
            .ok_or_else(|| format!("line {}: empty face", i + 1))?;
        if count < 3 || idx.len() != count {
            return Err(format!("line {}: malformed face", i + 1));
        }
        for k in 1..count - 1 {
            faces.push([idx[0], idx[k], idx[k + 1]]);
        }
    }
    Ok((vertices, faces))
}
