use nalgebra::{Matrix3, Vector3};

use super::noise::{NoiseModel, Stream};
use super::{argmax, centers_from_points, FieldOracle, FieldSample, HumanSample, NoiseSpec, Surface};
use crate::body::NUM_PARTS;
use crate::error::{Error, Result};
use crate::geometry::{ClosestPointQuery, PointIndex, TriangleMesh};

/// Part logits are `-d_j / LOGIT_DISTANCE_SCALE`, with `d_j` the distance
/// to the nearest ground-truth body vertex of part `j` (meters).
pub const LOGIT_DISTANCE_SCALE: f64 = 0.1;

/// Logit assigned to parts that have no vertices.
const ABSENT_PART_LOGIT: f64 = -1e4;

/// Ground truth an oracle is built from and diagnosed against.
#[derive(Clone, Debug)]
pub struct SceneTruth {
    pub human: TriangleMesh,
    pub object: TriangleMesh,
    /// 1-based part label per human vertex.
    pub part_labels: Vec<u8>,
    pub object_rotation: Matrix3<f64>,
    pub centers: [f64; 5],
}

impl SceneTruth {
    pub fn new(
        human: TriangleMesh,
        object: TriangleMesh,
        part_labels: Vec<u8>,
        object_rotation: Matrix3<f64>,
        z0: f64,
    ) -> Result<Self> {
        if human.faces().is_empty() || object.faces().is_empty() {
            return Err(Error::InvalidMesh("oracle meshes need at least one face".into()));
        }
        if part_labels.len() != human.num_vertices() {
            return Err(Error::CorrespondenceMismatch {
                mesh: human.num_vertices(),
                model: part_labels.len(),
            });
        }
        let centers = centers_from_points(human.vertices(), object.vertices(), z0)?;
        Ok(Self {
            human,
            object,
            part_labels,
            object_rotation,
            centers,
        })
    }
}

/// Exact fields from ground-truth meshes, optionally perturbed.
#[derive(Clone, Debug)]
pub struct MeshOracle {
    truth: SceneTruth,
    human_query: ClosestPointQuery,
    object_query: ClosestPointQuery,
    parts: Vec<Option<PointIndex>>,
    noise: Option<NoiseModel>,
}

impl MeshOracle {
    pub fn new(truth: SceneTruth, noise: NoiseSpec) -> Result<Self> {
        noise.validate()?;
        let human_query = ClosestPointQuery::new(&truth.human);
        let object_query = ClosestPointQuery::new(&truth.object);
        let parts = (1..=NUM_PARTS)
            .map(|j| {
                let pts: Vec<_> = truth
                    .human
                    .vertices()
                    .iter()
                    .zip(&truth.part_labels)
                    .filter(|(_, &l)| l as usize == j)
                    .map(|(v, _)| *v)
                    .collect();
                (!pts.is_empty()).then(|| PointIndex::new(&pts))
            })
            .collect();
        let noise = (!noise.is_zero()).then(|| NoiseModel::new(noise));
        Ok(Self {
            truth,
            human_query,
            object_query,
            parts,
            noise,
        })
    }

    pub fn exact(truth: SceneTruth) -> Self {
        Self::new(truth, NoiseSpec::none()).expect("zero noise is valid")
    }

    pub fn truth(&self) -> &SceneTruth {
        &self.truth
    }

    pub fn noise(&self) -> NoiseSpec {
        self.noise.as_ref().map(|n| n.spec).unwrap_or_default()
    }

    fn distance(&self, which: Surface, p: &Vector3<f64>) -> (f64, Vector3<f64>) {
        let (query, stream) = match which {
            Surface::Human => (&self.human_query, Stream::HumanGradient),
            Surface::Object => (&self.object_query, Stream::ObjectGradient),
        };
        let s = query.udf(p);
        match &self.noise {
            None => (s.distance, s.gradient),
            Some(n) => {
                let (u, sign) = n.distance(which == Surface::Human, p, s.distance);
                (u, sign * n.rotate_gradient(&s.gradient, p, stream))
            }
        }
    }

    fn parts(&self, p: &Vector3<f64>) -> ([f64; NUM_PARTS], [Vector3<f64>; NUM_PARTS]) {
        let mut part_logits = [ABSENT_PART_LOGIT; NUM_PARTS];
        let mut part_logit_grads = [Vector3::zeros(); NUM_PARTS];
        for (j, index) in self.parts.iter().enumerate() {
            let Some(index) = index else { continue };
            let (k, d) = index.nearest(p).expect("part index is non-empty");
            part_logits[j] = -d / LOGIT_DISTANCE_SCALE;
            if d > 0.0 {
                part_logit_grads[j] = -(p - index.points()[k]) / (d * LOGIT_DISTANCE_SCALE);
            }
        }
        if let Some(n) = &self.noise {
            let winner = argmax(&part_logits);
            if let Some(other) = n.flip_target(winner, NUM_PARTS, p) {
                part_logits.swap(winner, other);
                part_logit_grads.swap(winner, other);
            }
        }
        (part_logits, part_logit_grads)
    }
}

impl FieldOracle for MeshOracle {
    fn sample(&self, p: &Vector3<f64>) -> FieldSample {
        let (u_h, grad_u_h) = self.distance(Surface::Human, p);
        let (u_o, grad_u_o) = self.distance(Surface::Object, p);
        let (part_logits, part_logit_grads) = self.parts(p);
        let mut rot = self.truth.object_rotation;
        let mut centers = self.truth.centers;
        if let Some(n) = &self.noise {
            rot = n.perturb_rotation(&rot, p);
            centers = n.perturb_centers(&centers, p);
        }
        FieldSample {
            u_h,
            grad_u_h,
            u_o,
            grad_u_o,
            part_logits,
            part_logit_grads,
            rot,
            centers,
            out_of_bounds: false,
        }
    }

    fn udf(&self, which: Surface, p: &Vector3<f64>) -> (f64, Vector3<f64>) {
        self.distance(which, p)
    }

    fn human(&self, p: &Vector3<f64>) -> HumanSample {
        let (u, grad) = self.distance(Surface::Human, p);
        let (part_logits, part_logit_grads) = self.parts(p);
        HumanSample {
            u,
            grad,
            part_logits,
            part_logit_grads,
        }
    }
}
