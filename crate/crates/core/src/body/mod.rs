//! Articulated body model: rest template, kinematic tree, skinning, shape
//! blend directions and per-vertex part labels.

mod lbs;
mod model;
pub mod toy;

use nalgebra::Vector3;

pub use lbs::PosedBody;
pub use model::{
    BodyModel, BodyParams, RigFile, RigJoint, RigLandmark, RigShapeDirection, DEFAULT_SHAPE_BOUND, NUM_PARTS,
};

use crate::error::{Error, Result};

/// Vertices carrying 1-based part label `part`.
pub fn part_points(vertices: &[Vector3<f64>], labels: &[u8], part: usize) -> Result<Vec<Vector3<f64>>> {
    if part == 0 || part > NUM_PARTS {
        return Err(Error::PartIndexOutOfRange(part));
    }
    if vertices.len() != labels.len() {
        return Err(Error::CorrespondenceMismatch {
            mesh: vertices.len(),
            model: labels.len(),
        });
    }
    Ok(vertices
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l as usize == part)
        .map(|(v, _)| *v)
        .collect())
}

/// Named landmark positions on a posed surface.
pub fn body_keypoints(model: &BodyModel, vertices: &[Vector3<f64>]) -> Vec<(String, Vector3<f64>)> {
    model
        .landmarks()
        .iter()
        .map(|(name, v)| (name.clone(), vertices[*v]))
        .collect()
}

#[cfg(test)]
mod tests;
