use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ObjectPose;
use crate::error::{Error, Result};
use crate::fields::{object_center_from_centers, surface_projection, FieldOracle, Surface};
use crate::geometry::TriangleMesh;
use crate::so3;

/// Nearest rotation to `m` in Frobenius norm.
pub fn svd_project_so3(m: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    so3::svd_project(m)
}

/// Object pose estimated from the rotation and center fields.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectInit {
    pub pose: ObjectPose,
    /// Object center predicted by the center field.
    pub center: Vector3<f64>,
    /// Distinct probe points inside the shell.
    pub samples: usize,
}

/// Averages the rotation and center fields over the probes whose object
/// distance is below `shell`. The rotation is the SVD projection of the
/// mean matrix; the translation places the template centroid at the mean
/// predicted center, with the body center taken at `body_depth`.
/// Repeated probes (projection often lands many seeds on one vertex)
/// count once.
pub fn init_object_pose(
    oracle: &dyn FieldOracle,
    probes: &[Vector3<f64>],
    shell: f64,
    template: &TriangleMesh,
    body_depth: f64,
    z0: f64,
) -> Result<ObjectInit> {
    let mut rot = Matrix3::zeros();
    let mut centers = [0.0; 5];
    let mut n = 0usize;
    let mut distinct: Vec<[u64; 3]> = probes.iter().map(|p| p.map(f64::to_bits).into()).collect();
    distinct.sort_unstable();
    distinct.dedup();
    for bits in &distinct {
        let p = Vector3::from(bits.map(f64::from_bits));
        let s = oracle.sample(&p);
        if s.u_o < shell {
            rot += s.rot;
            for (c, v) in centers.iter_mut().zip(&s.centers) {
                *c += v;
            }
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyShell { shell });
    }
    let rotation = svd_project_so3(&(rot / n as f64))?;
    let centers = centers.map(|c| c / n as f64);
    let center = object_center_from_centers(&centers, body_depth, z0);
    Ok(ObjectInit {
        pose: ObjectPose::centered_at(rotation, &template.centroid(), &center, 1.0),
        center,
        samples: n,
    })
}

/// Points on the object surface found by projecting `count` uniform seeds
/// from the box `[lo, hi]`.
pub fn object_probes(
    oracle: &dyn FieldOracle,
    lo: &Vector3<f64>,
    hi: &Vector3<f64>,
    count: usize,
    iterations: usize,
    step_clamp: f64,
    seed: u64,
) -> Vec<Vector3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<_> = (0..count)
        .map(|_| Vector3::from_fn(|k, _| rng.gen_range(lo[k]..=hi[k])))
        .collect();
    surface_projection(oracle, Surface::Object, &seeds, iterations, step_clamp).points
}
