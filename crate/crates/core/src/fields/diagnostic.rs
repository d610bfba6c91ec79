use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{FieldOracle, MeshOracle, SceneTruth};
use crate::geometry::sample_surface;
use crate::io::KeyValues;
use crate::so3;

/// Spread of diagnostic sample points around the surfaces, meters.
const SAMPLE_SPREAD: f64 = 0.05;

/// Mean per-sample discrepancies between an oracle and the exact fields.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldDiagnostic {
    pub samples: usize,
    pub delta: f64,
    /// Mean `|min(u, delta) - min(u_gt, delta)|`, meters.
    pub human_udf_error: f64,
    pub object_udf_error: f64,
    /// Fraction of samples whose winning part matches ground truth.
    pub part_accuracy: f64,
    /// Mean geodesic distance to the true rotation, radians.
    pub rotation_error: f64,
    /// Mean Euclidean error of the center vector, meters.
    pub center_error: f64,
}

impl FieldDiagnostic {
    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.set("samples", self.samples);
        kv.set("delta", self.delta);
        kv.set("human_udf_error", self.human_udf_error);
        kv.set("object_udf_error", self.object_udf_error);
        kv.set("part_accuracy", self.part_accuracy);
        kv.set("rotation_error", self.rotation_error);
        kv.set("center_error", self.center_error);
        kv
    }
}

/// Compares `oracle` with the exact fields of `truth` at `samples` points
/// scattered around both surfaces (half each), deterministic per `seed`.
pub fn field_diagnostic(
    oracle: &dyn FieldOracle,
    truth: &SceneTruth,
    samples: usize,
    delta: f64,
    seed: u64,
) -> FieldDiagnostic {
    let reference = MeshOracle::exact(truth.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spread = Normal::new(0.0, SAMPLE_SPREAD).expect("positive spread");
    let half = samples / 2;
    let mut points = sample_surface(&truth.human, half, &mut rng);
    points.extend(sample_surface(&truth.object, samples - half, &mut rng));
    for p in &mut points {
        *p += Vector3::from_fn(|_, _| spread.sample(&mut rng));
    }

    let mut sums = [0.0; 5];
    for p in &points {
        let a = oracle.sample(p);
        let b = reference.sample(p);
        sums[0] += (a.u_h.min(delta) - b.u_h.min(delta)).abs();
        sums[1] += (a.u_o.min(delta) - b.u_o.min(delta)).abs();
        sums[2] += (a.argmax_part() == b.argmax_part()) as u8 as f64;
        sums[3] += so3::geodesic(&a.rot, &truth.object_rotation);
        sums[4] += a
            .centers
            .iter()
            .zip(&truth.centers)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
    }
    let n = points.len().max(1) as f64;
    FieldDiagnostic {
        samples: points.len(),
        delta,
        human_udf_error: sums[0] / n,
        object_udf_error: sums[1] / n,
        part_accuracy: sums[2] / n,
        rotation_error: sums[3] / n,
        center_error: sums[4] / n,
    }
}
