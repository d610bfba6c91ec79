use nalgebra::{Vector2, Vector3};

use super::{FitConfig, Keypoints2D, ObjectPose};
use crate::body::{BodyModel, BodyParams};
use crate::error::Result;
use crate::fields::{FieldOracle, Surface};
use crate::geometry::{
    distance_transform, render_silhouette, sample_bilinear, PerspectiveCamera, SilhouetteMask, TriangleMesh,
};

/// Energy value with per-vertex gradients.
#[derive(Clone, Debug, Default)]
pub struct VertexEnergy {
    pub value: f64,
    pub grads: Vec<Vector3<f64>>,
}

impl VertexEnergy {
    fn zeros(n: usize) -> Self {
        Self {
            value: 0.0,
            grads: vec![Vector3::zeros(); n],
        }
    }
}

/// Gradient with respect to an object pose: a left axis-angle increment
/// of the rotation, the translation and the scale.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ObjectGradient {
    pub rotation: Vector3<f64>,
    pub translation: Vector3<f64>,
    pub scale: f64,
}

/// Chain rule from posed object vertices `s (R o + t)` to the pose.
pub fn object_pose_gradient(pose: &ObjectPose, template: &[Vector3<f64>], grads: &[Vector3<f64>]) -> ObjectGradient {
    let mut out = ObjectGradient::default();
    for (o, g) in template.iter().zip(grads) {
        let ro = pose.rotation * o;
        out.rotation += pose.scale * ro.cross(g);
        out.translation += pose.scale * g;
        out.scale += (ro + pose.translation).dot(g);
    }
    out
}

/// `-log softmax(z / tau)[label]` and its gradient with respect to `z`.
pub fn part_cross_entropy(logits: &[f64], label: usize, tau: f64) -> (f64, Vec<f64>) {
    let z: Vec<f64> = logits.iter().map(|v| v / tau).collect();
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = z.iter().map(|v| (v - m).exp()).sum();
    let lse = m + sum.ln();
    let grad = z
        .iter()
        .enumerate()
        .map(|(j, v)| ((v - m).exp() / sum - (j == label) as u8 as f64) / tau)
        .collect();
    (lse - z[label], grad)
}

/// Human data term over posed body vertices: clamped human distance plus
/// part cross-entropy against each vertex's label. Returns the total and
/// the two weighted parts.
pub fn human_data_term(
    vertices: &[Vector3<f64>],
    labels: &[u8],
    oracle: &dyn FieldOracle,
    cfg: &FitConfig,
) -> (VertexEnergy, [f64; 2]) {
    let (e, parts, _) = human_data_term_kinks(vertices, labels, oracle, cfg, 0.0);
    (e, parts)
}

/// A vertex within `width` of a distance field's zero set. Its distance
/// gradient is left out of the smooth gradient; the energy's
/// subdifferential there spans `[-bound, bound] * normal`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Kink {
    pub vertex: usize,
    pub normal: Vector3<f64>,
    pub bound: f64,
}

/// As [`human_data_term`], with distance gradients of vertices closer than
/// `width` to the surface split off as kinks (`width = 0` keeps all).
pub(crate) fn human_data_term_kinks(
    vertices: &[Vector3<f64>],
    labels: &[u8],
    oracle: &dyn FieldOracle,
    cfg: &FitConfig,
    width: f64,
) -> (VertexEnergy, [f64; 2], Vec<Kink>) {
    let mut kinks = Vec::new();
    let mut e = VertexEnergy::zeros(vertices.len());
    let mut parts = [0.0; 2];
    for (i, v) in vertices.iter().enumerate() {
        let (u, g) = if cfg.lambda_part > 0.0 {
            let s = oracle.human(v);
            let label = labels[i] as usize - 1;
            let (ce, dz) = part_cross_entropy(&s.part_logits, label, cfg.tau);
            parts[1] += cfg.lambda_part * ce;
            for (d, lg) in dz.iter().zip(&s.part_logit_grads) {
                e.grads[i] += cfg.lambda_part * d * lg;
            }
            (s.u, s.grad)
        } else {
            oracle.udf(Surface::Human, v)
        };
        if u < cfg.delta {
            parts[0] += cfg.lambda_h * u;
            if u < width {
                kinks.push(Kink {
                    vertex: i,
                    normal: g,
                    bound: cfg.lambda_h,
                });
            } else {
                e.grads[i] += cfg.lambda_h * g;
            }
        } else {
            parts[0] += cfg.lambda_h * cfg.delta;
        }
    }
    e.value = parts[0] + parts[1];
    (e, parts, kinks)
}

/// Weighted human data term and its gradient with respect to body
/// parameters.
pub fn energy_human(
    params: &BodyParams,
    model: &BodyModel,
    oracle: &dyn FieldOracle,
    cfg: &FitConfig,
) -> (f64, BodyParams) {
    let posed = model.forward(params);
    let (e, _) = human_data_term(&posed.vertices, model.part_labels(), oracle, cfg);
    (e.value, model.backward(params, &posed, &e.grads))
}

/// Unweighted `sum min(u_o, delta)` over posed object vertices.
pub fn object_udf_term(vertices: &[Vector3<f64>], oracle: &dyn FieldOracle, delta: f64) -> VertexEnergy {
    object_udf_term_kinks(vertices, oracle, delta, 0.0, &mut Vec::new())
}

fn object_udf_term_kinks(
    vertices: &[Vector3<f64>],
    oracle: &dyn FieldOracle,
    delta: f64,
    width: f64,
    kinks: &mut Vec<Kink>,
) -> VertexEnergy {
    let mut e = VertexEnergy::zeros(vertices.len());
    for (i, (v, g_out)) in vertices.iter().zip(e.grads.iter_mut()).enumerate() {
        let (u, g) = oracle.udf(Surface::Object, v);
        if u < delta {
            e.value += u;
            if u < width {
                kinks.push(Kink {
                    vertex: i,
                    normal: g,
                    bound: 1.0,
                });
            } else {
                *g_out = g;
            }
        } else {
            e.value += delta;
        }
    }
    e
}

/// Unweighted `|c - mean(vertices)|^2`.
pub fn object_center_term(vertices: &[Vector3<f64>], center: &Vector3<f64>) -> VertexEnergy {
    let n = vertices.len() as f64;
    let d = center - vertices.iter().sum::<Vector3<f64>>() / n;
    VertexEnergy {
        value: d.norm_squared(),
        grads: vec![-2.0 * d / n; vertices.len()],
    }
}

/// Differentiable occlusion-aware silhouette penalty, in squared pixels:
/// the mean over projected vertices of their squared distance to the
/// region allowed for the object (observed object or human pixels), plus
/// the mean over visible object-boundary pixels left uncovered by the
/// current render of the squared distance to the nearest projected vertex.
#[derive(Clone, Debug)]
pub struct SilhouetteTerm {
    camera: PerspectiveCamera,
    outside: Vec<f64>,
    boundary: Vec<(usize, usize)>,
}

impl SilhouetteTerm {
    /// `None` when the object mask is empty.
    pub fn new(
        camera: &PerspectiveCamera,
        object_mask: &SilhouetteMask,
        human_mask: &SilhouetteMask,
    ) -> Result<Option<Self>> {
        let allowed = object_mask.union(human_mask)?;
        if object_mask.count() == 0 {
            return Ok(None);
        }
        let (w, h) = object_mask.dims();
        let outside = distance_transform(&allowed);
        let mut boundary = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if !object_mask.get(x, y) {
                    continue;
                }
                let mut exposed = false;
                let mut occluded = false;
                for (dx, dy) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        exposed = true;
                        continue;
                    }
                    let (nx, ny) = (nx as usize, ny as usize);
                    if human_mask.get(nx, ny) {
                        occluded = true;
                    } else if !object_mask.get(nx, ny) {
                        exposed = true;
                    }
                }
                if exposed && !occluded {
                    boundary.push((x, y));
                }
            }
        }
        Ok(Some(Self {
            camera: *camera,
            outside,
            boundary,
        }))
    }

    pub fn evaluate(&self, mesh: &TriangleMesh) -> VertexEnergy {
        let vertices = mesh.vertices();
        let mut e = VertexEnergy::zeros(vertices.len());
        let (w, h) = (self.camera.width, self.camera.height);
        let n = vertices.len() as f64;
        let projected: Vec<Option<Vector2<f64>>> = vertices.iter().map(|v| self.camera.project(v).ok()).collect();
        for (i, q) in projected.iter().enumerate() {
            let Some(q) = q else { continue };
            let (d, dd) = sample_bilinear(&self.outside, w, h, q);
            let excess = d - 0.5;
            if excess > 0.0 {
                e.value += excess * excess / n;
                let gq = 2.0 * excess * dd / n;
                e.grads[i] += self.camera.project_jacobian(&vertices[i]).transpose() * gq;
            }
        }
        if self.boundary.is_empty() {
            return e;
        }
        let covered = render_silhouette(mesh, &self.camera).ok().map(|r| r.mask);
        let nb = self.boundary.len() as f64;
        for &(x, y) in &self.boundary {
            if covered.as_ref().is_some_and(|m| m.get(x, y)) {
                continue;
            }
            let b = Vector2::new(x as f64 + 0.5, y as f64 + 0.5);
            let nearest = projected
                .iter()
                .enumerate()
                .filter_map(|(i, q)| q.map(|q| (i, q)))
                .min_by(|a, c| (a.1 - b).norm_squared().total_cmp(&(c.1 - b).norm_squared()));
            if let Some((i, q)) = nearest {
                let r = q - b;
                e.value += r.norm_squared() / nb;
                e.grads[i] += self.camera.project_jacobian(&vertices[i]).transpose() * (2.0 * r / nb);
            }
        }
        e
    }
}

/// Weighted breakdown of the object data term.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ObjectTerms {
    pub udf: f64,
    pub silhouette: f64,
    pub center: f64,
}

impl ObjectTerms {
    pub fn total(&self) -> f64 {
        self.udf + self.silhouette + self.center
    }
}

/// Object data term on posed object vertices: weighted clamped object
/// distance, silhouette penalty and center regularizer.
pub fn object_data_term(
    mesh: &TriangleMesh,
    oracle: &dyn FieldOracle,
    silhouette: Option<&SilhouetteTerm>,
    center: Option<&Vector3<f64>>,
    cfg: &FitConfig,
) -> (VertexEnergy, ObjectTerms) {
    let (e, terms, _) = object_data_term_kinks(mesh, oracle, silhouette, center, cfg, 0.0);
    (e, terms)
}

/// As [`object_data_term`], with kinks of the distance part split off as
/// in [`human_data_term_kinks`].
pub(crate) fn object_data_term_kinks(
    mesh: &TriangleMesh,
    oracle: &dyn FieldOracle,
    silhouette: Option<&SilhouetteTerm>,
    center: Option<&Vector3<f64>>,
    cfg: &FitConfig,
    width: f64,
) -> (VertexEnergy, ObjectTerms, Vec<Kink>) {
    let mut kinks = Vec::new();
    let vertices = mesh.vertices();
    let mut e = VertexEnergy::zeros(vertices.len());
    let mut terms = ObjectTerms::default();
    let mut add = |part: VertexEnergy, w: f64, slot: &mut f64| {
        *slot = w * part.value;
        for (g, p) in e.grads.iter_mut().zip(&part.grads) {
            *g += w * p;
        }
    };
    if cfg.lambda_o > 0.0 {
        add(
            object_udf_term_kinks(vertices, oracle, cfg.delta, width, &mut kinks),
            cfg.lambda_o,
            &mut terms.udf,
        );
        for k in &mut kinks {
            k.bound = cfg.lambda_o;
        }
    }
    if let (Some(s), true) = (silhouette, cfg.lambda_occ > 0.0) {
        add(s.evaluate(mesh), cfg.lambda_occ, &mut terms.silhouette);
    }
    if let (Some(c), true) = (center, cfg.lambda_reg > 0.0) {
        add(object_center_term(vertices, c), cfg.lambda_reg, &mut terms.center);
    }
    e.value = terms.total();
    (e, terms, kinks)
}

/// Object data term and its gradient with respect to the pose.
pub fn energy_object(
    pose: &ObjectPose,
    template: &TriangleMesh,
    oracle: &dyn FieldOracle,
    silhouette: Option<&SilhouetteTerm>,
    center: Option<&Vector3<f64>>,
    cfg: &FitConfig,
) -> (f64, ObjectGradient) {
    let posed = pose.apply_mesh(template);
    let (e, _) = object_data_term(&posed, oracle, silhouette, center, cfg);
    (e.value, object_pose_gradient(pose, template.vertices(), &e.grads))
}

/// Confidence-weighted robust reprojection error of the model landmarks:
/// `c * r^2` for residual norms `r <= k` pixels, `c * (2 k r - k^2)` beyond.
pub fn keypoint_term(
    vertices: &[Vector3<f64>],
    model: &BodyModel,
    camera: &PerspectiveCamera,
    keypoints: &Keypoints2D,
    huber_px: f64,
) -> VertexEnergy {
    let mut e = VertexEnergy::zeros(vertices.len());
    for ((_, vi), kp) in model.landmarks().iter().zip(&keypoints.points) {
        if kp.confidence == 0.0 {
            continue;
        }
        let v = vertices[*vi];
        let Ok(q) = camera.project(&v) else { continue };
        let r = q - kp.pixel;
        let rn = r.norm();
        let (value, dr) = if rn <= huber_px {
            (rn * rn, 2.0 * r)
        } else {
            (2.0 * huber_px * rn - huber_px * huber_px, 2.0 * huber_px * r / rn)
        };
        e.value += kp.confidence * value;
        e.grads[*vi] += camera.project_jacobian(&v).transpose() * (kp.confidence * dr);
    }
    e
}

/// Unweighted keypoint energy and its gradient with respect to body
/// parameters.
pub fn energy_j2d(
    params: &BodyParams,
    model: &BodyModel,
    camera: &PerspectiveCamera,
    keypoints: &Keypoints2D,
    huber_px: f64,
) -> (f64, BodyParams) {
    let posed = model.forward(params);
    let e = keypoint_term(&posed.vertices, model, camera, keypoints, huber_px);
    (e.value, model.backward(params, &posed, &e.grads))
}

/// Unweighted prior `sum_{j>0} |theta_j - theta_init_j|^2 + |beta|^2`.
pub fn energy_reg(params: &BodyParams, init: &BodyParams) -> (f64, BodyParams) {
    let mut grad = BodyParams::zeros(params.pose.len(), params.shape.len());
    let mut value = 0.0;
    for j in 1..params.pose.len() {
        let d = params.pose[j] - init.pose[j];
        value += d.norm_squared();
        grad.pose[j] = 2.0 * d;
    }
    for (g, b) in grad.shape.iter_mut().zip(&params.shape) {
        value += b * b;
        *g = 2.0 * b;
    }
    (value, grad)
}
