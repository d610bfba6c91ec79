use nalgebra::Vector3;

use crate::body::NUM_PARTS;
use crate::fields::{FieldOracle, Surface};

/// Per-part contact vertex indices. `human[j]` indexes body vertices of
/// part `j + 1`, `object[j]` indexes object vertices attributed to it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContactSets {
    pub human: Vec<Vec<usize>>,
    pub object: Vec<Vec<usize>>,
}

impl Default for ContactSets {
    fn default() -> Self {
        Self {
            human: vec![Vec::new(); NUM_PARTS],
            object: vec![Vec::new(); NUM_PARTS],
        }
    }
}

impl ContactSets {
    /// Parts with both sides non-empty.
    pub fn active_parts(&self) -> Vec<usize> {
        (0..NUM_PARTS)
            .filter(|&j| !self.human[j].is_empty() && !self.object[j].is_empty())
            .map(|j| j + 1)
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.active_parts().is_empty()
    }

    /// Total number of contact vertices on both sides of active parts.
    pub fn count(&self) -> usize {
        self.active_parts()
            .iter()
            .map(|j| self.human[j - 1].len() + self.object[j - 1].len())
            .sum()
    }

    pub fn points(
        &self,
        body: &[Vector3<f64>],
        object: &[Vector3<f64>],
    ) -> (Vec<Vec<Vector3<f64>>>, Vec<Vec<Vector3<f64>>>) {
        let pick = |sets: &Vec<Vec<usize>>, v: &[Vector3<f64>]| -> Vec<Vec<Vector3<f64>>> {
            sets.iter().map(|s| s.iter().map(|&i| v[i]).collect()).collect()
        };
        (pick(&self.human, body), pick(&self.object, object))
    }

    /// `part human_indices | object_indices` per non-empty part.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for j in 0..NUM_PARTS {
            if self.human[j].is_empty() && self.object[j].is_empty() {
                continue;
            }
            let join = |s: &[usize]| s.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ");
            out.push_str(&format!(
                "{} {} | {}\n",
                j + 1,
                join(&self.human[j]),
                join(&self.object[j])
            ));
        }
        out
    }
}

/// Body vertices of part `j` whose object distance is at most `epsilon`,
/// and object vertices within `epsilon` of the body whose winning part is
/// `j` (ties to the lower part).
pub fn detect_contacts(
    body: &[Vector3<f64>],
    labels: &[u8],
    object: &[Vector3<f64>],
    oracle: &dyn FieldOracle,
    epsilon: f64,
) -> ContactSets {
    let mut sets = ContactSets::default();
    for (i, (v, &l)) in body.iter().zip(labels).enumerate() {
        if oracle.udf(Surface::Object, v).0 <= epsilon {
            sets.human[l as usize - 1].push(i);
        }
    }
    for (i, v) in object.iter().enumerate() {
        if oracle.udf(Surface::Human, v).0 <= epsilon {
            let part = oracle.sample(v).argmax_part();
            sets.object[part - 1].push(i);
        }
    }
    sets
}

/// Contact energy with gradients for every point of both sides.
#[derive(Clone, Debug, Default)]
pub struct ContactEnergy {
    pub value: f64,
    pub human_grads: Vec<Vec<Vector3<f64>>>,
    pub object_grads: Vec<Vec<Vector3<f64>>>,
}

/// Sum over parts of the chamfer distance between paired contact sets;
/// parts with an empty side contribute zero.
pub fn energy_contact(human: &[Vec<Vector3<f64>>], object: &[Vec<Vector3<f64>>]) -> ContactEnergy {
    let mut out = ContactEnergy {
        value: 0.0,
        human_grads: human.iter().map(|s| vec![Vector3::zeros(); s.len()]).collect(),
        object_grads: object.iter().map(|s| vec![Vector3::zeros(); s.len()]).collect(),
    };
    for j in 0..human.len().min(object.len()) {
        let (a, b) = (&human[j], &object[j]);
        if a.is_empty() || b.is_empty() {
            continue;
        }
        let (ga, gb) = (&mut out.human_grads[j], &mut out.object_grads[j]);
        out.value += directed(a, b, ga, gb) + directed(b, a, gb, ga);
    }
    out
}

/// Half the mean nearest-neighbour distance from `from` to `to`, with
/// gradients accumulated into both.
fn directed(from: &[Vector3<f64>], to: &[Vector3<f64>], g_from: &mut [Vector3<f64>], g_to: &mut [Vector3<f64>]) -> f64 {
    let w = 0.5 / from.len() as f64;
    let mut total = 0.0;
    for (i, p) in from.iter().enumerate() {
        let (k, d) = to
            .iter()
            .enumerate()
            .map(|(k, q)| (k, (p - q).norm()))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .expect("non-empty");
        total += w * d;
        if d > 0.0 {
            let dir = (p - to[k]) / d;
            g_from[i] += w * dir;
            g_to[k] -= w * dir;
        }
    }
    total
}
