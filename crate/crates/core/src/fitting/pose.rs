use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::TriangleMesh;
use crate::io::{join_f64, KeyValues};
use crate::so3;

/// Rigid pose plus uniform scale of the object template:
/// `x -> scale * (rotation * x + translation)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectPose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub scale: f64,
}

impl Default for ObjectPose {
    fn default() -> Self {
        Self::identity()
    }
}

impl ObjectPose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            scale: 1.0,
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>, scale: f64) -> Result<Self> {
        let pose = Self {
            rotation,
            translation,
            scale,
        };
        pose.validate()?;
        Ok(pose)
    }

    pub fn validate(&self) -> Result<()> {
        let orth = (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax();
        if orth > 1e-9 || (self.rotation.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig("object rotation is not in SO(3)".into()));
        }
        if !(self.scale > 0.0) || !self.translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig(
                "object scale must be positive and translation finite".into(),
            ));
        }
        Ok(())
    }

    pub fn apply(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.scale * (self.rotation * x + self.translation)
    }

    pub fn apply_mesh(&self, template: &TriangleMesh) -> TriangleMesh {
        template.transformed(&self.rotation, &self.translation, self.scale)
    }

    /// Pose whose template centroid lands at `center` (scale kept).
    pub fn centered_at(
        rotation: Matrix3<f64>,
        template_centroid: &Vector3<f64>,
        center: &Vector3<f64>,
        scale: f64,
    ) -> Self {
        Self {
            rotation,
            translation: center / scale - rotation * template_centroid,
            scale,
        }
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.set("rotation", join_f64(self.rotation.transpose().iter().copied()));
        kv.set("translation", join_f64(self.translation.iter().copied()));
        kv.set("scale", self.scale);
        kv
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let r = kv.get_f64_list("rotation")?;
        let t = kv.get_f64_list("translation")?;
        if r.len() != 9 || t.len() != 3 {
            return Err(Error::InvalidConfig(
                "object pose needs 9 rotation and 3 translation values".into(),
            ));
        }
        let rotation = so3::svd_project(&Matrix3::from_row_slice(&r))?;
        Self::new(rotation, Vector3::from_column_slice(&t), kv.get_f64("scale")?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_key_values(&KeyValues::load(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_key_values().save(path)
    }
}
