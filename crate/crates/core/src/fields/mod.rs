//! Field oracles: per-point human/object unsigned distances, part logits,
//! object rotation and center fields, plus surface projection.
//!
//! [`MeshOracle`] evaluates the fields exactly from ground-truth meshes,
//! optionally perturbed by [`NoiseSpec`]. [`GridOracle`] interpolates a
//! sampled grid loaded from disk. [`SphereOracle`] is analytic.

mod diagnostic;
mod grid;
mod mesh_oracle;
mod noise;
mod sphere;

use nalgebra::{Matrix3, Vector3};

pub use diagnostic::{field_diagnostic, FieldDiagnostic};
pub use grid::{GridOracle, GRID_CHANNELS, GRID_MAGIC};
pub use mesh_oracle::{MeshOracle, SceneTruth, LOGIT_DISTANCE_SCALE};
pub use noise::NoiseSpec;
pub use sphere::SphereOracle;

use crate::body::NUM_PARTS;
use crate::error::{Error, Result};

/// Target depth of the center field and of depth-aware scaling.
pub const DEFAULT_Z0: f64 = 2.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Surface {
    Human,
    Object,
}

/// Every field evaluated at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSample {
    pub u_h: f64,
    pub grad_u_h: Vector3<f64>,
    pub u_o: f64,
    pub grad_u_o: Vector3<f64>,
    pub part_logits: [f64; NUM_PARTS],
    /// Spatial gradient of each logit.
    pub part_logit_grads: [Vector3<f64>; NUM_PARTS],
    pub rot: Matrix3<f64>,
    /// Body center x, y rescaled to depth z0, then the object center
    /// relative to the body center.
    pub centers: [f64; 5],
    pub out_of_bounds: bool,
}

impl FieldSample {
    /// Part with the largest logit, 1-based; ties go to the lower index.
    pub fn argmax_part(&self) -> usize {
        argmax(&self.part_logits) + 1
    }

    pub fn udf(&self, which: Surface) -> (f64, Vector3<f64>) {
        match which {
            Surface::Human => (self.u_h, self.grad_u_h),
            Surface::Object => (self.u_o, self.grad_u_o),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.u_h.is_finite()
            && self.u_o.is_finite()
            && self.grad_u_h.iter().chain(self.grad_u_o.iter()).all(|v| v.is_finite())
            && self.part_logits.iter().all(|v| v.is_finite())
            && self.part_logit_grads.iter().all(|g| g.iter().all(|v| v.is_finite()))
            && self.rot.iter().all(|v| v.is_finite())
            && self.centers.iter().all(|v| v.is_finite())
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Point-query interface shared by all oracles. Implementations are
/// immutable and safe to query from many threads.
pub trait FieldOracle: Send + Sync {
    fn sample(&self, p: &Vector3<f64>) -> FieldSample;

    /// Distance and gradient only; oracles override this when it is cheaper
    /// than a full sample.
    fn udf(&self, which: Surface, p: &Vector3<f64>) -> (f64, Vector3<f64>) {
        self.sample(p).udf(which)
    }

    /// Human distance and part logits only.
    fn human(&self, p: &Vector3<f64>) -> HumanSample {
        let s = self.sample(p);
        HumanSample {
            u: s.u_h,
            grad: s.grad_u_h,
            part_logits: s.part_logits,
            part_logit_grads: s.part_logit_grads,
        }
    }
}

/// The human-surface channels of a [`FieldSample`].
#[derive(Clone, Debug, PartialEq)]
pub struct HumanSample {
    pub u: f64,
    pub grad: Vector3<f64>,
    pub part_logits: [f64; NUM_PARTS],
    pub part_logit_grads: [Vector3<f64>; NUM_PARTS],
}

/// Center-field vector for a body and object given by their vertices.
pub fn centers_from_points(human: &[Vector3<f64>], object: &[Vector3<f64>], z0: f64) -> Result<[f64; 5]> {
    if human.is_empty() || object.is_empty() {
        return Err(Error::EmptySet);
    }
    let b = mean(human);
    let o = mean(object);
    if b.z <= 0.0 {
        return Err(Error::NonPositiveMeanDepth(b.z));
    }
    let off = o - b;
    Ok([b.x * z0 / b.z, b.y * z0 / b.z, off.x, off.y, off.z])
}

/// Object center implied by a center-field vector once the body depth is
/// known.
pub fn object_center_from_centers(centers: &[f64; 5], body_depth: f64, z0: f64) -> Vector3<f64> {
    let k = body_depth / z0;
    Vector3::new(centers[0] * k, centers[1] * k, body_depth) + Vector3::new(centers[2], centers[3], centers[4])
}

pub(crate) fn mean(points: &[Vector3<f64>]) -> Vector3<f64> {
    points.iter().sum::<Vector3<f64>>() / points.len() as f64
}

/// Result of [`surface_projection`].
#[derive(Clone, Debug, Default)]
pub struct Projection {
    pub points: Vec<Vector3<f64>>,
    /// Seeds whose final distance stayed above the threshold.
    pub discarded: usize,
}

/// Distance below which a projected seed counts as on the surface.
pub const PROJECTION_TOLERANCE: f64 = 1e-4;
pub const DEFAULT_STEP_CLAMP: f64 = 0.05;

/// Moves every seed along the negative UDF gradient,
/// `p <- p - min(u, step_clamp) * grad u`, for `iterations` steps and keeps
/// the seeds that end within [`PROJECTION_TOLERANCE`] of the surface.
pub fn surface_projection(
    oracle: &dyn FieldOracle,
    which: Surface,
    seeds: &[Vector3<f64>],
    iterations: usize,
    step_clamp: f64,
) -> Projection {
    let mut out = Projection::default();
    for seed in seeds {
        let mut p = *seed;
        let (mut u, mut g) = oracle.udf(which, &p);
        for _ in 0..iterations {
            if u < PROJECTION_TOLERANCE {
                break;
            }
            p -= u.min(step_clamp) * g;
            (u, g) = oracle.udf(which, &p);
        }
        if u < PROJECTION_TOLERANCE && p.iter().all(|v| v.is_finite()) {
            out.points.push(p);
        } else {
            out.discarded += 1;
        }
    }
    out
}
