use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::TriangleMesh;
use crate::io::{join_f64, KeyValues};

/// Number of body parts in the correspondence labeling.
pub const NUM_PARTS: usize = 14;

/// Default box for shape coefficients.
pub const DEFAULT_SHAPE_BOUND: f64 = 5.0;

/// Rig file layout. See `docs/rig_format.md`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RigFile {
    #[serde(default)]
    pub name: String,
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
    pub joints: Vec<RigJoint>,
    /// Per vertex, sparse `(joint, weight)` pairs.
    pub skinning: Vec<Vec<(usize, f64)>>,
    #[serde(default)]
    pub shape_basis: Vec<RigShapeDirection>,
    /// Per vertex, in `1..=14`.
    pub part_labels: Vec<u8>,
    #[serde(default)]
    pub part_names: Vec<String>,
    #[serde(default)]
    pub landmarks: Vec<RigLandmark>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RigJoint {
    pub name: String,
    pub parent: Option<usize>,
    pub position: [f64; 3],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RigShapeDirection {
    pub vertex_offsets: Vec<[f64; 3]>,
    pub joint_offsets: Vec<[f64; 3]>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RigLandmark {
    pub name: String,
    pub vertex: usize,
}

/// Linear-blend-skinned articulated body with shape blendshapes and a
/// 14-part vertex labeling. Joints are stored parents-first.
#[derive(Clone, Debug)]
pub struct BodyModel {
    pub(crate) name: String,
    pub(crate) template: Vec<Vector3<f64>>,
    pub(crate) faces: Vec<[usize; 3]>,
    pub(crate) joint_names: Vec<String>,
    pub(crate) parents: Vec<Option<usize>>,
    pub(crate) joints: Vec<Vector3<f64>>,
    pub(crate) skinning: Vec<Vec<(usize, f64)>>,
    /// `[shape][vertex]`
    pub(crate) shape_dirs: Vec<Vec<Vector3<f64>>>,
    /// `[shape][joint]`
    pub(crate) joint_shape_dirs: Vec<Vec<Vector3<f64>>>,
    pub(crate) part_labels: Vec<u8>,
    pub(crate) part_names: Vec<String>,
    pub(crate) landmarks: Vec<(String, usize)>,
    pub shape_bound: f64,
}

impl BodyModel {
    pub fn from_rig(rig: RigFile) -> Result<Self> {
        let bad = |m: String| Error::InvalidBodyModel(m);
        let n = rig.vertices.len();
        let nj = rig.joints.len();
        if n == 0 || nj == 0 {
            return Err(bad("rig needs vertices and joints".into()));
        }
        let template: Vec<Vector3<f64>> = rig.vertices.iter().map(|v| Vector3::from(*v)).collect();
        // validates indices, finiteness and face areas
        TriangleMesh::new(template.clone(), rig.faces.clone()).map_err(|e| bad(e.to_string()))?;

        let mut roots = 0;
        for (j, joint) in rig.joints.iter().enumerate() {
            match joint.parent {
                None => roots += 1,
                Some(p) if p < j => {}
                Some(p) => {
                    return Err(bad(format!(
                        "joint {j} has parent {p}; joints must be listed parents-first"
                    )))
                }
            }
        }
        if roots != 1 || rig.joints[0].parent.is_some() {
            return Err(bad("joint tree must have exactly one root, stored first".into()));
        }

        if rig.skinning.len() != n {
            return Err(bad(format!("{} skinning rows for {n} vertices", rig.skinning.len())));
        }
        for (i, row) in rig.skinning.iter().enumerate() {
            let mut sum = 0.0;
            for &(j, w) in row {
                if j >= nj {
                    return Err(bad(format!("vertex {i} skinned to missing joint {j}")));
                }
                if !(w >= 0.0) {
                    return Err(bad(format!("vertex {i} has negative skinning weight")));
                }
                sum += w;
            }
            if (sum - 1.0).abs() > 1e-6 {
                return Err(bad(format!("skinning weights of vertex {i} sum to {sum}")));
            }
        }

        for (b, dir) in rig.shape_basis.iter().enumerate() {
            if dir.vertex_offsets.len() != n || dir.joint_offsets.len() != nj {
                return Err(bad(format!("shape direction {b} has wrong dimensions")));
            }
        }

        if rig.part_labels.len() != n {
            return Err(bad(format!("{} part labels for {n} vertices", rig.part_labels.len())));
        }
        if let Some(i) = rig.part_labels.iter().position(|&l| l == 0 || l as usize > NUM_PARTS) {
            return Err(bad(format!("vertex {i} has part label outside 1..={NUM_PARTS}")));
        }
        for lm in &rig.landmarks {
            if lm.vertex >= n {
                return Err(bad(format!("landmark `{}` references vertex {}", lm.name, lm.vertex)));
            }
        }
        let part_names = if rig.part_names.len() == NUM_PARTS {
            rig.part_names
        } else {
            (1..=NUM_PARTS).map(|p| format!("part{p}")).collect()
        };

        Ok(Self {
            name: rig.name,
            template,
            faces: rig.faces,
            joint_names: rig.joints.iter().map(|j| j.name.clone()).collect(),
            parents: rig.joints.iter().map(|j| j.parent).collect(),
            joints: rig.joints.iter().map(|j| Vector3::from(j.position)).collect(),
            skinning: rig.skinning,
            shape_dirs: rig
                .shape_basis
                .iter()
                .map(|d| d.vertex_offsets.iter().map(|v| Vector3::from(*v)).collect())
                .collect(),
            joint_shape_dirs: rig
                .shape_basis
                .iter()
                .map(|d| d.joint_offsets.iter().map(|v| Vector3::from(*v)).collect())
                .collect(),
            part_labels: rig.part_labels,
            part_names,
            landmarks: rig.landmarks.into_iter().map(|l| (l.name, l.vertex)).collect(),
            shape_bound: DEFAULT_SHAPE_BOUND,
        })
    }

    pub fn to_rig(&self) -> RigFile {
        RigFile {
            name: self.name.clone(),
            vertices: self.template.iter().map(|v| [v.x, v.y, v.z]).collect(),
            faces: self.faces.clone(),
            joints: (0..self.num_joints())
                .map(|j| RigJoint {
                    name: self.joint_names[j].clone(),
                    parent: self.parents[j],
                    position: self.joints[j].into(),
                })
                .collect(),
            skinning: self.skinning.clone(),
            shape_basis: (0..self.num_shapes())
                .map(|b| RigShapeDirection {
                    vertex_offsets: self.shape_dirs[b].iter().map(|v| (*v).into()).collect(),
                    joint_offsets: self.joint_shape_dirs[b].iter().map(|v| (*v).into()).collect(),
                })
                .collect(),
            part_labels: self.part_labels.clone(),
            part_names: self.part_names.clone(),
            landmarks: self
                .landmarks
                .iter()
                .map(|(name, vertex)| RigLandmark {
                    name: name.clone(),
                    vertex: *vertex,
                })
                .collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let rig: RigFile = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        Self::from_rig(rig)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_rig()).expect("rig serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_vertices(&self) -> usize {
        self.template.len()
    }

    pub fn num_joints(&self) -> usize {
        self.joints.len()
    }

    pub fn num_shapes(&self) -> usize {
        self.shape_dirs.len()
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn template(&self) -> &[Vector3<f64>] {
        &self.template
    }

    pub fn rest_joints(&self) -> &[Vector3<f64>] {
        &self.joints
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joint_names
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joint_names.iter().position(|n| n == name)
    }

    pub fn skinning(&self) -> &[Vec<(usize, f64)>] {
        &self.skinning
    }

    /// Per-vertex labels in `1..=14`.
    pub fn part_labels(&self) -> &[u8] {
        &self.part_labels
    }

    pub fn part_names(&self) -> &[String] {
        &self.part_names
    }

    pub fn landmarks(&self) -> &[(String, usize)] {
        &self.landmarks
    }

    pub fn template_mesh(&self) -> TriangleMesh {
        TriangleMesh::new(self.template.clone(), self.faces.clone()).expect("validated at load")
    }

    pub fn zero_params(&self) -> BodyParams {
        BodyParams::zeros(self.num_joints(), self.num_shapes())
    }
}

/// Pose, global translation and shape coefficients. `pose[0]` is the global
/// root rotation, all rotations are axis-angle in radians.
#[derive(Clone, Debug, PartialEq)]
pub struct BodyParams {
    pub pose: Vec<Vector3<f64>>,
    pub translation: Vector3<f64>,
    pub shape: Vec<f64>,
}

impl BodyParams {
    pub fn zeros(joints: usize, shapes: usize) -> Self {
        Self {
            pose: vec![Vector3::zeros(); joints],
            translation: Vector3::zeros(),
            shape: vec![0.0; shapes],
        }
    }

    pub fn dim(&self) -> usize {
        3 * self.pose.len() + 3 + self.shape.len()
    }

    /// `[pose (3J), translation (3), shape (B)]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        for p in &self.pose {
            v.extend_from_slice(p.as_slice());
        }
        v.extend_from_slice(self.translation.as_slice());
        v.extend_from_slice(&self.shape);
        v
    }

    pub fn from_vec(joints: usize, shapes: usize, v: &[f64]) -> Self {
        assert_eq!(v.len(), 3 * joints + 3 + shapes);
        Self {
            pose: (0..joints)
                .map(|j| Vector3::new(v[3 * j], v[3 * j + 1], v[3 * j + 2]))
                .collect(),
            translation: Vector3::new(v[3 * joints], v[3 * joints + 1], v[3 * joints + 2]),
            shape: v[3 * joints + 3..].to_vec(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vec().iter().all(|x| x.is_finite())
    }

    /// Projects shape coefficients into `[-bound, bound]`.
    pub fn clamp_shape(&mut self, bound: f64) {
        for b in &mut self.shape {
            *b = b.clamp(-bound, bound);
        }
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.set("joints", self.pose.len());
        kv.set("pose", join_f64(self.pose.iter().flat_map(|p| p.iter().copied())));
        kv.set("translation", join_f64(self.translation.iter().copied()));
        kv.set("shape", join_f64(self.shape.iter().copied()));
        kv
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let pose = kv.get_f64_list("pose")?;
        let translation = kv.get_f64_list("translation")?;
        let shape = if kv.get("shape").is_some() {
            kv.get_f64_list("shape")?
        } else {
            Vec::new()
        };
        if pose.len() % 3 != 0 || translation.len() != 3 {
            return Err(Error::InvalidBodyModel(
                "pose must hold 3 values per joint and translation 3 values".into(),
            ));
        }
        Ok(Self {
            pose: pose.chunks(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect(),
            translation: Vector3::new(translation[0], translation[1], translation[2]),
            shape,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_key_values(&KeyValues::load(path)?).map_err(|e| Error::parse(path, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_key_values().save(path)
    }

    /// Checks dimensions against a model.
    pub fn check(&self, model: &BodyModel) -> Result<()> {
        if self.pose.len() != model.num_joints() || self.shape.len() != model.num_shapes() {
            return Err(Error::InvalidBodyModel(format!(
                "parameters have {} joints / {} shapes, model has {} / {}",
                self.pose.len(),
                self.shape.len(),
                model.num_joints(),
                model.num_shapes()
            )));
        }
        Ok(())
    }
}
