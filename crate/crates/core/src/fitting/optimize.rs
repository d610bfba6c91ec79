use std::fmt::Write as _;

use nalgebra::Vector3;

use super::contact::{detect_contacts, energy_contact, ContactSets};
use super::energy::{
    energy_reg, human_data_term_kinks, keypoint_term, object_data_term_kinks, object_pose_gradient, Kink,
    ObjectGradient, SilhouetteTerm,
};
use super::init::{init_object_pose, object_probes, svd_project_so3, ObjectInit};
use super::{FitConfig, Keypoints2D, ObjectPose};
use crate::body::{BodyModel, BodyParams};
use crate::error::{Error, Result};
use crate::fields::FieldOracle;
use crate::geometry::{PerspectiveCamera, SilhouetteMask, TriangleMesh};
use crate::so3;

/// Inputs shared by every stage of a fit.
pub struct FitProblem<'a> {
    pub model: &'a BodyModel,
    pub oracle: &'a dyn FieldOracle,
    pub template: &'a TriangleMesh,
    pub camera: &'a PerspectiveCamera,
    pub object_mask: Option<&'a SilhouetteMask>,
    pub human_mask: Option<&'a SilhouetteMask>,
    pub keypoints: Option<&'a Keypoints2D>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Human,
    Object,
    Joint,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Human => "human",
            Stage::Object => "object",
            Stage::Joint => "joint",
        }
    }

    fn body(&self) -> bool {
        matches!(self, Stage::Human | Stage::Joint)
    }

    fn object(&self) -> bool {
        matches!(self, Stage::Object | Stage::Joint)
    }
}

/// Weighted energy terms.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TermValues {
    pub human: f64,
    pub object: f64,
    pub contact: f64,
    pub keypoints: f64,
    pub prior: f64,
}

impl TermValues {
    pub fn total(&self) -> f64 {
        self.human + self.object + self.contact + self.keypoints + self.prior
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub stage: Stage,
    pub iteration: usize,
    pub terms: TermValues,
    /// Line-search step multiplier of the accepted update, 0 if rejected.
    pub step: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FitReport {
    pub rows: Vec<ReportRow>,
    /// Stages that ended by the stall criterion rather than the budget.
    pub converged: Vec<Stage>,
    pub init_samples: usize,
    pub contact_redetections: usize,
}

impl FitReport {
    pub fn to_text(&self) -> String {
        let mut out = String::from("# iteration stage human object contact keypoints prior total step\n");
        for r in &self.rows {
            let t = &r.terms;
            let _ = writeln!(
                out,
                "{} {} {:.9e} {:.9e} {:.9e} {:.9e} {:.9e} {:.9e} {:.6e}",
                r.iteration,
                r.stage.name(),
                t.human,
                t.object,
                t.contact,
                t.keypoints,
                t.prior,
                t.total(),
                r.step
            );
        }
        out
    }

    pub fn final_terms(&self) -> Option<TermValues> {
        self.rows.last().map(|r| r.terms)
    }
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub body: BodyParams,
    pub object: ObjectPose,
    pub contacts: ContactSets,
    pub report: FitReport,
    pub object_init: ObjectPose,
}

impl FitResult {
    pub fn body_mesh(&self, model: &BodyModel) -> TriangleMesh {
        model.lbs_forward(&self.body)
    }

    pub fn object_mesh(&self, template: &TriangleMesh) -> TriangleMesh {
        self.object.apply_mesh(template)
    }
}

#[derive(Clone, Debug)]
struct State {
    body: BodyParams,
    object: ObjectPose,
}

struct Gradient {
    body: BodyParams,
    object: ObjectGradient,
}

/// Vertices sitting at a kink of a clamped distance, excluded from the
/// smooth gradient.
#[derive(Default)]
struct Kinks {
    body: Vec<Kink>,
    object: Vec<Kink>,
}

struct Evaluator<'a> {
    problem: &'a FitProblem<'a>,
    cfg: &'a FitConfig,
    silhouette: Option<SilhouetteTerm>,
    center: Option<Vector3<f64>>,
    pose_init: BodyParams,
}

impl Evaluator<'_> {
    /// Energy terms and, if `grad`, the gradient. With a positive `width`,
    /// field vertices closer than `width` to the surface are left out of the
    /// gradient and returned as kinks.
    fn evaluate(
        &self,
        stage: Stage,
        contacts: &ContactSets,
        state: &State,
        grad: bool,
        width: f64,
    ) -> (TermValues, Option<Gradient>, Kinks) {
        let cfg = self.cfg;
        let model = self.problem.model;
        let mut terms = TermValues::default();
        let mut kinks = Kinks::default();
        let use_contacts = stage == Stage::Joint && cfg.use_contacts && cfg.lambda_c > 0.0 && !contacts.is_empty();

        let posed_body = (stage.body() || use_contacts).then(|| model.forward(&state.body));
        let posed_object = (stage.object() || use_contacts).then(|| state.object.apply_mesh(self.problem.template));
        let mut body_grads = posed_body.as_ref().map(|p| vec![Vector3::zeros(); p.vertices.len()]);
        let mut object_grads = posed_object.as_ref().map(|m| vec![Vector3::zeros(); m.num_vertices()]);

        if stage.body() {
            let posed = posed_body.as_ref().expect("posed body");
            let bg = body_grads.as_mut().expect("body grads");
            let (e, _, k) =
                human_data_term_kinks(&posed.vertices, model.part_labels(), self.problem.oracle, cfg, width);
            kinks.body = k;
            terms.human = e.value;
            add(bg, &e.grads, 1.0);
            if let (Some(kp), true) = (self.problem.keypoints, cfg.lambda_j > 0.0) {
                let e = keypoint_term(&posed.vertices, model, self.problem.camera, kp, cfg.huber_px);
                terms.keypoints = cfg.lambda_j * e.value;
                add(bg, &e.grads, cfg.lambda_j);
            }
            terms.prior = cfg.lambda_r * energy_reg(&state.body, &self.pose_init).0;
        }
        if stage.object() {
            let mesh = posed_object.as_ref().expect("posed object");
            let (e, _, k) = object_data_term_kinks(
                mesh,
                self.problem.oracle,
                self.silhouette.as_ref(),
                self.center.as_ref(),
                cfg,
                width,
            );
            kinks.object = k;
            terms.object = e.value;
            add(object_grads.as_mut().expect("object grads"), &e.grads, 1.0);
        }
        if use_contacts {
            let body_v = &posed_body.as_ref().expect("posed body").vertices;
            let obj_v = posed_object.as_ref().expect("posed object").vertices();
            let (hp, op) = contacts.points(body_v, obj_v);
            let e = energy_contact(&hp, &op);
            terms.contact = cfg.lambda_c * e.value;
            let og = object_grads.as_mut().expect("object grads");
            for (set, gs) in contacts.object.iter().zip(&e.object_grads) {
                for (&i, g) in set.iter().zip(gs) {
                    og[i] += cfg.lambda_c * g;
                }
            }
            if !cfg.contact_object_only {
                let bg = body_grads.as_mut().expect("body grads");
                for (set, gs) in contacts.human.iter().zip(&e.human_grads) {
                    for (&i, g) in set.iter().zip(gs) {
                        bg[i] += cfg.lambda_c * g;
                    }
                }
            }
        }
        if !grad {
            return (terms, None, kinks);
        }
        let mut body = BodyParams::zeros(model.num_joints(), model.num_shapes());
        if stage.body() {
            let posed = posed_body.as_ref().expect("posed body");
            body = model.backward(&state.body, posed, body_grads.as_ref().expect("body grads"));
            let reg = energy_reg(&state.body, &self.pose_init).1;
            for (g, r) in body.pose.iter_mut().zip(&reg.pose) {
                *g += cfg.lambda_r * r;
            }
            for (g, r) in body.shape.iter_mut().zip(&reg.shape) {
                *g += cfg.lambda_r * r;
            }
        }
        let object = if stage.object() {
            object_pose_gradient(
                &state.object,
                self.problem.template.vertices(),
                object_grads.as_ref().expect("object grads"),
            )
        } else {
            ObjectGradient::default()
        };
        (terms, Some(Gradient { body, object }), kinks)
    }

    /// Descent direction at a kink: the minimum-norm element of the
    /// subdifferential in rate-scaled coordinates. Each kink contributes
    /// `c * a` with `|c| <= bound`, `a` the parameter image of its normal.
    /// Body and object kinks touch disjoint blocks, so each block is solved
    /// alone and kept only if its one-sided directional derivative is
    /// negative.
    fn subgradient_direction(
        &self,
        layout: &Layout,
        rates: &[f64],
        state: &State,
        g: &[f64],
        kinks: &Kinks,
    ) -> Option<Vec<f64>> {
        let model = self.problem.model;
        let n = layout.len();
        let o = layout.body_len();
        let mut dir = vec![0.0; n];
        let mut blocks: Vec<(std::ops::Range<usize>, Vec<(Vec<f64>, f64)>)> = Vec::new();
        if layout.body {
            let posed = model.forward(&state.body);
            let mut onehot = vec![Vector3::zeros(); posed.vertices.len()];
            let mut columns = Vec::with_capacity(kinks.body.len());
            for k in &kinks.body {
                onehot[k.vertex] = k.normal;
                let a = model.backward(&state.body, &posed, &onehot).to_vec();
                onehot[k.vertex] = Vector3::zeros();
                columns.push((a, k.bound));
            }
            blocks.push((0..o, columns));
        }
        if layout.object {
            let template = self.problem.template.vertices();
            let columns = kinks
                .object
                .iter()
                .map(|k| {
                    let og = object_pose_gradient(&state.object, &template[k.vertex..=k.vertex], &[k.normal]);
                    let mut a: Vec<f64> = og.rotation.iter().chain(og.translation.iter()).copied().collect();
                    a.push(og.scale);
                    (a, k.bound)
                })
                .collect();
            blocks.push((o..n, columns));
        }
        for (range, columns) in &blocks {
            let d = &rates[range.clone()];
            let scaled: Vec<(Vec<f64>, f64)> = columns
                .iter()
                .map(|(a, b)| (a.iter().zip(d).map(|(x, r)| x * r).collect(), *b))
                .collect();
            let r = min_norm_point(
                &g[range.clone()].iter().zip(d).map(|(x, r)| x * r).collect::<Vec<_>>(),
                &scaled,
            );
            let step: Vec<f64> = r.iter().zip(d).map(|(v, rate)| rate * v).collect();
            // derivative of the energy along -step
            let slope = -g[range.clone()].iter().zip(&step).map(|(a, b)| a * b).sum::<f64>()
                + columns
                    .iter()
                    .map(|(a, b)| b * a.iter().zip(&step).map(|(x, y)| x * y).sum::<f64>().abs())
                    .sum::<f64>();
            if slope < 0.0 {
                dir[range.clone()].copy_from_slice(&step);
            }
        }
        let peak = dir
            .iter()
            .zip(rates)
            .filter(|(_, r)| **r > 0.0)
            .fold(0.0f64, |m, (v, r)| m.max((v / r).abs()));
        (peak > 0.0).then(|| dir.iter().map(|v| v / peak).collect())
    }
}

/// Minimum-norm point of `g + sum_k c_k a_k` over `|c_k| <= bound_k`, by
/// cyclic coordinate descent.
fn min_norm_point(g: &[f64], columns: &[(Vec<f64>, f64)]) -> Vec<f64> {
    const SWEEPS: usize = 300;
    let mut r = g.to_vec();
    let norms: Vec<f64> = columns.iter().map(|(a, _)| a.iter().map(|x| x * x).sum()).collect();
    let mut coef = vec![0.0; columns.len()];
    let tol = 1e-9 * g.iter().map(|x| x * x).sum::<f64>().sqrt();
    for _ in 0..SWEEPS {
        let mut change = 0.0f64;
        for (k, (a, bound)) in columns.iter().enumerate() {
            if norms[k] == 0.0 {
                continue;
            }
            let dot: f64 = a.iter().zip(&r).map(|(x, y)| x * y).sum();
            let c = (coef[k] - dot / norms[k]).clamp(-bound, *bound);
            let dc = c - coef[k];
            if dc != 0.0 {
                for (ri, ai) in r.iter_mut().zip(a) {
                    *ri += dc * ai;
                }
                coef[k] = c;
                change = change.max(dc.abs() * norms[k].sqrt());
            }
        }
        if change <= tol {
            break;
        }
    }
    r
}

fn add(acc: &mut [Vector3<f64>], g: &[Vector3<f64>], w: f64) {
    for (a, b) in acc.iter_mut().zip(g) {
        *a += w * b;
    }
}

/// Flat layout of the variables optimized in a stage.
struct Layout {
    body: bool,
    object: bool,
    joints: usize,
    shapes: usize,
}

impl Layout {
    fn body_len(&self) -> usize {
        if self.body {
            3 * self.joints + 3 + self.shapes
        } else {
            0
        }
    }

    fn len(&self) -> usize {
        self.body_len() + if self.object { 7 } else { 0 }
    }

    fn flatten(&self, g: &Gradient) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        if self.body {
            v.extend(g.body.to_vec());
        }
        if self.object {
            v.extend(g.object.rotation.iter());
            v.extend(g.object.translation.iter());
            v.push(g.object.scale);
        }
        v
    }

    fn rates(&self, cfg: &FitConfig) -> Vec<f64> {
        let mut r = Vec::with_capacity(self.len());
        if self.body {
            r.extend(std::iter::repeat_n(cfg.lr_pose, 3 * self.joints));
            r.extend([cfg.lr_translation; 3]);
            r.extend(std::iter::repeat_n(cfg.lr_shape, self.shapes));
        }
        if self.object {
            r.extend([cfg.lr_rotation; 3]);
            r.extend([cfg.lr_object_translation; 3]);
            r.push(if cfg.optimize_scale { cfg.lr_scale } else { 0.0 });
        }
        r
    }

    /// `state - step`, with the rotation part applied as a left increment
    /// and box constraints enforced.
    fn retract(&self, state: &State, step: &[f64], cfg: &FitConfig) -> State {
        let mut out = state.clone();
        let mut o = 0;
        if self.body {
            let mut x = state.body.to_vec();
            for (xi, s) in x.iter_mut().zip(&step[..self.body_len()]) {
                *xi -= s;
            }
            out.body = BodyParams::from_vec(self.joints, self.shapes, &x);
            out.body.clamp_shape(cfg.shape_bound);
            o = self.body_len();
        }
        if self.object {
            let w = -Vector3::new(step[o], step[o + 1], step[o + 2]);
            out.object.rotation = so3::exp(&w) * state.object.rotation;
            out.object.translation -= Vector3::new(step[o + 3], step[o + 4], step[o + 5]);
            out.object.scale = (state.object.scale - step[o + 6]).clamp(cfg.scale_min, cfg.scale_max);
        }
        out
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn direction(&mut self, g: &[f64], rates: &[f64]) -> Vec<f64> {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        g.iter()
            .zip(rates)
            .enumerate()
            .map(|(i, (gi, r))| {
                self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * gi;
                self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * gi * gi;
                r * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-12)
            })
            .collect()
    }
}

/// Minimizes the full energy in three stages: body only, object only, then
/// both with contacts re-detected every `contact_every` iterations. Within
/// a stage every accepted step does not increase the energy (step-halving
/// line search); contact re-detection may change it between phases.
///
/// The object pose starts from `object_init` if given, else from the pose
/// fields averaged over projected probe points.
pub fn joint_fit(
    problem: &FitProblem,
    init_body: &BodyParams,
    object_init: Option<ObjectPose>,
    cfg: &FitConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    init_body.check(problem.model)?;
    let posed = problem.model.forward(init_body);
    let n = posed.vertices.len() as f64;
    let body_depth = posed.vertices.iter().map(|v| v.z).sum::<f64>() / n;
    let (lo, hi) = bounds(&posed.vertices);
    let margin = Vector3::repeat(0.6);
    let probes = object_probes(
        problem.oracle,
        &(lo - margin),
        &(hi + margin),
        cfg.probe_seeds,
        cfg.probe_iterations,
        cfg.probe_step_clamp,
        cfg.seed,
    );
    let estimated = init_object_pose(problem.oracle, &probes, cfg.shell, problem.template, body_depth, cfg.z0);
    let (object, center, init_samples) = match (object_init, estimated) {
        (Some(pose), Ok(ObjectInit { center, samples, .. })) => (pose, Some(center), samples),
        (Some(pose), Err(Error::EmptyShell { .. })) => (pose, None, 0),
        (None, Ok(init)) => (init.pose, Some(init.center), init.samples),
        (_, Err(e)) => return Err(e),
    };
    let silhouette = match (problem.object_mask, problem.human_mask) {
        (Some(o), Some(h)) => SilhouetteTerm::new(problem.camera, o, h)?,
        (Some(o), None) => SilhouetteTerm::new(
            problem.camera,
            o,
            &SilhouetteMask::empty(o.width(), o.height(), o.source),
        )?,
        _ => None,
    };
    let evaluator = Evaluator {
        problem,
        cfg,
        silhouette,
        center,
        pose_init: init_body.clone(),
    };
    let mut state = State {
        body: init_body.clone(),
        object,
    };
    let mut report = FitReport {
        init_samples,
        ..FitReport::default()
    };
    let mut contacts = ContactSets::default();
    let schedule = [
        (Stage::Human, cfg.human_iterations),
        (Stage::Object, cfg.object_iterations),
        (Stage::Joint, cfg.joint_iterations),
    ];
    for (stage, budget) in schedule {
        if budget == 0 {
            continue;
        }
        let converged = run_stage(&evaluator, stage, budget, &mut state, &mut contacts, &mut report);
        if converged {
            report.converged.push(stage);
        }
    }
    if cfg.use_contacts {
        contacts = current_contacts(problem, &state, cfg);
    }
    Ok(FitResult {
        body: state.body,
        object: state.object,
        contacts,
        report,
        object_init: object,
    })
}

fn bounds(points: &[Vector3<f64>]) -> (Vector3<f64>, Vector3<f64>) {
    points
        .iter()
        .fold((points[0], points[0]), |(lo, hi), p| (lo.inf(p), hi.sup(p)))
}

fn current_contacts(problem: &FitProblem, state: &State, cfg: &FitConfig) -> ContactSets {
    let body = problem.model.forward(&state.body).vertices;
    let object = state.object.apply_mesh(problem.template);
    detect_contacts(
        &body,
        problem.model.part_labels(),
        object.vertices(),
        problem.oracle,
        cfg.epsilon,
    )
}

fn run_stage(
    ev: &Evaluator,
    stage: Stage,
    budget: usize,
    state: &mut State,
    contacts: &mut ContactSets,
    report: &mut FitReport,
) -> bool {
    let cfg = ev.cfg;
    let layout = Layout {
        body: stage.body(),
        object: stage.object(),
        joints: ev.problem.model.num_joints(),
        shapes: ev.problem.model.num_shapes(),
    };
    let rates = layout.rates(cfg);
    let mut adam = Adam::new(layout.len());
    let with_contacts = stage == Stage::Joint && cfg.use_contacts;
    if with_contacts {
        *contacts = current_contacts(ev.problem, state, cfg);
        report.contact_redetections += 1;
    }
    let (mut terms, _, _) = ev.evaluate(stage, contacts, state, false, 0.0);
    let mut stalled = 0;
    // first trial step of the line search, grown back after each success
    let mut start = 1.0;
    let mut prefer_subgradient = false;
    report.rows.push(ReportRow {
        stage,
        iteration: 0,
        terms,
        step: 0.0,
    });
    for it in 1..=budget {
        if with_contacts && it % cfg.contact_every == 0 {
            *contacts = current_contacts(ev.problem, state, cfg);
            report.contact_redetections += 1;
            terms = ev.evaluate(stage, contacts, state, false, 0.0).0;
        }
        if stage.object() && it % cfg.reorthonormalize_every == 0 {
            if let Ok(r) = svd_project_so3(&state.object.rotation) {
                state.object.rotation = r;
            }
            terms = ev.evaluate(stage, contacts, state, false, 0.0).0;
        }
        let current = terms.total();
        if current == 0.0 {
            return true;
        }
        let (_, grad, _) = ev.evaluate(stage, contacts, state, true, 0.0);
        let g = layout.flatten(&grad.expect("gradient requested"));
        if g.iter().all(|v| *v == 0.0) {
            return true;
        }
        let adam_dir = adam.direction(&g, &rates);
        let search = |dir: &[f64], alpha0: f64| {
            let mut alpha = alpha0;
            for _ in 0..=cfg.max_halvings {
                let step: Vec<f64> = dir.iter().map(|d| alpha * d).collect();
                let candidate = layout.retract(state, &step, cfg);
                let (t, _, _) = ev.evaluate(stage, contacts, &candidate, false, 0.0);
                if t.total().is_finite() && t.total() <= current {
                    return Some((candidate, t, alpha));
                }
                alpha *= 0.5;
            }
            None
        };
        // Adam steps move every coordinate; at a kink of the clamped
        // distances that is rarely a descent direction, so a failed step
        // falls back to the minimum-norm subgradient.
        let mut accepted = if prefer_subgradient {
            None
        } else {
            search(&adam_dir, start)
        };
        if accepted.is_none() {
            let (_, grad, kinks) = ev.evaluate(stage, contacts, state, true, cfg.surrogate_width);
            let gs = layout.flatten(&grad.expect("gradient requested"));
            let dir = ev.subgradient_direction(&layout, &rates, state, &gs, &kinks);
            accepted = dir.and_then(|d| search(&d, if prefer_subgradient { start } else { 1.0 }));
            if accepted.is_some() {
                prefer_subgradient = true;
            } else if prefer_subgradient {
                prefer_subgradient = false;
                accepted = search(&adam_dir, 1.0);
            }
        }
        let step = match accepted {
            Some((candidate, t, alpha)) => {
                *state = candidate;
                terms = t;
                start = (2.0 * alpha).min(1.0);
                alpha
            }
            None => {
                start = 1.0;
                0.0
            }
        };
        report.rows.push(ReportRow {
            stage,
            iteration: it,
            terms,
            step,
        });
        if current - terms.total() <= cfg.tolerance * current.abs().max(1e-12) {
            stalled += 1;
            if stalled >= cfg.patience {
                return true;
            }
        } else {
            stalled = 0;
        }
    }
    false
}
