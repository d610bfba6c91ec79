use nalgebra::{Matrix3, Vector3};

use super::{FieldOracle, FieldSample, Surface, DEFAULT_Z0};
use crate::body::NUM_PARTS;

/// Analytic oracle: human and object are spheres, the part field is
/// uniform and the pose fields are constant. The human center should lie
/// in front of the camera (z > 0).
#[derive(Clone, Debug)]
pub struct SphereOracle {
    pub human_center: Vector3<f64>,
    pub human_radius: f64,
    pub object_center: Vector3<f64>,
    pub object_radius: f64,
    pub rotation: Matrix3<f64>,
}

impl SphereOracle {
    pub fn new(human_center: Vector3<f64>, human_radius: f64, object_center: Vector3<f64>, object_radius: f64) -> Self {
        Self {
            human_center,
            human_radius,
            object_center,
            object_radius,
            rotation: Matrix3::identity(),
        }
    }

    fn sphere_udf(c: &Vector3<f64>, r: f64, p: &Vector3<f64>) -> (f64, Vector3<f64>) {
        let d = p - c;
        let n = d.norm();
        if n == 0.0 {
            return (r, Vector3::zeros());
        }
        let u = n - r;
        (u.abs(), d / n * u.signum())
    }
}

impl FieldOracle for SphereOracle {
    fn sample(&self, p: &Vector3<f64>) -> FieldSample {
        let (u_h, grad_u_h) = self.udf(Surface::Human, p);
        let (u_o, grad_u_o) = self.udf(Surface::Object, p);
        let off = self.object_center - self.human_center;
        let k = DEFAULT_Z0 / self.human_center.z;
        FieldSample {
            u_h,
            grad_u_h,
            u_o,
            grad_u_o,
            part_logits: [0.0; NUM_PARTS],
            part_logit_grads: [Vector3::zeros(); NUM_PARTS],
            rot: self.rotation,
            centers: [self.human_center.x * k, self.human_center.y * k, off.x, off.y, off.z],
            out_of_bounds: false,
        }
    }

    fn udf(&self, which: Surface, p: &Vector3<f64>) -> (f64, Vector3<f64>) {
        match which {
            Surface::Human => Self::sphere_udf(&self.human_center, self.human_radius, p),
            Surface::Object => Self::sphere_udf(&self.object_center, self.object_radius, p),
        }
    }
}
