//! Depth-aware scaling: `V -> s V` with `s = z0 / mean(z)` moves a mesh to
//! mean depth `z0` without changing its perspective projection.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{PerspectiveCamera, TriangleMesh};
use crate::io::KeyValues;

pub use crate::fields::DEFAULT_Z0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingRecord {
    pub scale: f64,
    /// Mean vertex depth before scaling.
    pub mean_depth: f64,
    pub z0: f64,
}

impl ScalingRecord {
    pub fn for_mean_depth(mean_depth: f64, z0: f64) -> Result<Self> {
        if !(mean_depth > 0.0) {
            return Err(Error::NonPositiveMeanDepth(mean_depth));
        }
        if !(z0 > 0.0) {
            return Err(Error::NonPositiveDepth(z0));
        }
        Ok(Self {
            scale: z0 / mean_depth,
            mean_depth,
            z0,
        })
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.set("scale", self.scale);
        kv.set("mean_depth", self.mean_depth);
        kv.set("z0", self.z0);
        kv
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        Ok(Self {
            scale: kv.get_f64("scale")?,
            mean_depth: kv.get_f64("mean_depth")?,
            z0: kv.get_f64("z0")?,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_key_values(&KeyValues::load(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_key_values().save(path)
    }
}

fn mean_depth<'a>(meshes: impl IntoIterator<Item = &'a TriangleMesh>) -> f64 {
    let (sum, n) = meshes
        .into_iter()
        .flat_map(|m| m.vertices())
        .fold((0.0, 0usize), |(s, n), v| (s + v.z, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

pub fn depth_aware_scale(mesh: &TriangleMesh, z0: f64) -> Result<(TriangleMesh, ScalingRecord)> {
    let record = ScalingRecord::for_mean_depth(mean_depth([mesh]), z0)?;
    Ok((mesh.map_vertices(|v| v * record.scale), record))
}

/// Scales human and object by one factor computed from their combined
/// vertices, preserving their arrangement.
pub fn joint_scale(
    human: &TriangleMesh,
    object: &TriangleMesh,
    z0: f64,
) -> Result<(TriangleMesh, TriangleMesh, ScalingRecord)> {
    let record = ScalingRecord::for_mean_depth(mean_depth([human, object]), z0)?;
    let s = record.scale;
    Ok((human.map_vertices(|v| v * s), object.map_vertices(|v| v * s), record))
}

/// Image resize factor that makes a person reconstructed at
/// `reference_mean_depth` under `test_camera` appear as if at `z0` under
/// `train_camera`: `(f_train / z0) / (f_test / reference_mean_depth)`,
/// with `f` the geometric mean of `fx` and `fy`. This similar-triangles
/// rule is a reconstruction, not a published formula.
pub fn patch_resize_factor(
    reference_mean_depth: f64,
    z0: f64,
    train_camera: &PerspectiveCamera,
    test_camera: &PerspectiveCamera,
) -> Result<f64> {
    if !(reference_mean_depth > 0.0) {
        return Err(Error::NonPositiveDepth(reference_mean_depth));
    }
    if !(z0 > 0.0) {
        return Err(Error::NonPositiveDepth(z0));
    }
    Ok((train_camera.mean_focal() / z0) / (test_camera.mean_focal() / reference_mean_depth))
}
