//! Scene directories and the synthetic scene generator.
//!
//! A scene is a directory with fixed file names: `human.ply`, `object.ply`,
//! `template.ply`, `camera.txt`, `mask_human.pgm`, `mask_object.pgm`, and
//! optionally `keypoints.txt`, `init_body.txt`, `gt_body.txt` and
//! `object_pose.txt`.

use std::path::Path;
use std::str::FromStr;

use nalgebra::{Matrix3, Rotation3, Unit, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};

use crate::body::{toy, BodyModel, BodyParams};
use crate::error::{Error, Result};
use crate::fields::SceneTruth;
use crate::fitting::{Keypoint2D, Keypoints2D, ObjectPose};
use crate::geometry::{
    primitives, procrustes_align, render_silhouette, ClosestPointQuery, MaskSource, PerspectiveCamera, SilhouetteMask,
    TriangleMesh,
};
use crate::so3;

pub const HUMAN_MESH: &str = "human.ply";
pub const OBJECT_MESH: &str = "object.ply";
pub const TEMPLATE_MESH: &str = "template.ply";
pub const CAMERA: &str = "camera.txt";
pub const HUMAN_MASK: &str = "mask_human.pgm";
pub const OBJECT_MASK: &str = "mask_object.pgm";
pub const KEYPOINTS: &str = "keypoints.txt";
pub const INIT_BODY: &str = "init_body.txt";
pub const GT_BODY: &str = "gt_body.txt";
pub const OBJECT_POSE: &str = "object_pose.txt";

#[derive(Clone, Debug)]
pub struct Scene {
    pub camera: PerspectiveCamera,
    pub human: TriangleMesh,
    pub object: TriangleMesh,
    pub template: TriangleMesh,
    pub human_mask: SilhouetteMask,
    pub object_mask: SilhouetteMask,
    pub keypoints: Option<Vec<Keypoint2D>>,
    pub init_body: Option<BodyParams>,
    pub gt_body: Option<BodyParams>,
    pub object_pose: Option<ObjectPose>,
}

impl Scene {
    pub fn load(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::SceneMissing {
                dir: dir.into(),
                what: "scene directory",
            });
        }
        let need = |name: &'static str| {
            let p = dir.join(name);
            if p.is_file() {
                Ok(p)
            } else {
                Err(Error::SceneMissing {
                    dir: dir.into(),
                    what: name,
                })
            }
        };
        let optional = |name: &str| Some(dir.join(name)).filter(|p| p.is_file());
        let camera = PerspectiveCamera::load(&need(CAMERA)?)?;
        let mut human_mask = SilhouetteMask::load(&need(HUMAN_MASK)?)?;
        let mut object_mask = SilhouetteMask::load(&need(OBJECT_MASK)?)?;
        human_mask.source = MaskSource::Observed;
        object_mask.source = MaskSource::Observed;
        for (name, m) in [(HUMAN_MASK, &human_mask), (OBJECT_MASK, &object_mask)] {
            if !m.matches_camera(&camera) {
                return Err(Error::InvalidScene {
                    dir: dir.into(),
                    reason: format!(
                        "{name} is {}x{}, camera is {}x{}",
                        m.width(),
                        m.height(),
                        camera.width,
                        camera.height
                    ),
                });
            }
        }
        let keypoints = match optional(KEYPOINTS) {
            Some(p) => {
                let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                Some(Keypoints2D::parse(&text, &p)?)
            }
            None => None,
        };
        Ok(Self {
            camera,
            human: TriangleMesh::load(&need(HUMAN_MESH)?)?,
            object: TriangleMesh::load(&need(OBJECT_MESH)?)?,
            template: TriangleMesh::load(&need(TEMPLATE_MESH)?)?,
            human_mask,
            object_mask,
            keypoints,
            init_body: optional(INIT_BODY).map(|p| BodyParams::load(&p)).transpose()?,
            gt_body: optional(GT_BODY).map(|p| BodyParams::load(&p)).transpose()?,
            object_pose: optional(OBJECT_POSE).map(|p| ObjectPose::load(&p)).transpose()?,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.camera.save(&dir.join(CAMERA))?;
        self.human.save(&dir.join(HUMAN_MESH))?;
        self.object.save(&dir.join(OBJECT_MESH))?;
        self.template.save(&dir.join(TEMPLATE_MESH))?;
        self.human_mask.save(&dir.join(HUMAN_MASK))?;
        self.object_mask.save(&dir.join(OBJECT_MASK))?;
        if let Some(k) = &self.keypoints {
            let text: String = k
                .iter()
                .map(|k| format!("{} {} {} {}\n", k.name, k.pixel.x, k.pixel.y, k.confidence))
                .collect();
            let p = dir.join(KEYPOINTS);
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        }
        if let Some(b) = &self.init_body {
            b.save(&dir.join(INIT_BODY))?;
        }
        if let Some(b) = &self.gt_body {
            b.save(&dir.join(GT_BODY))?;
        }
        if let Some(p) = &self.object_pose {
            p.save(&dir.join(OBJECT_POSE))?;
        }
        Ok(())
    }

    /// Ground-truth object rotation: from `object_pose.txt` when present,
    /// else aligned from template to object vertices.
    pub fn object_rotation(&self) -> Result<Matrix3<f64>> {
        if let Some(p) = &self.object_pose {
            return Ok(p.rotation);
        }
        Ok(procrustes_align(self.template.vertices(), self.object.vertices(), true)?.rotation)
    }

    pub fn truth(&self, model: &BodyModel, z0: f64) -> Result<SceneTruth> {
        SceneTruth::new(
            self.human.clone(),
            self.object.clone(),
            model.part_labels().to_vec(),
            self.object_rotation()?,
            z0,
        )
    }

    pub fn keypoints_for(&self, model: &BodyModel) -> Result<Option<Keypoints2D>> {
        self.keypoints
            .as_ref()
            .map(|k| Keypoints2D::for_model(model, k))
            .transpose()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ContactType {
    HandOnBox,
    HandOnCylinder,
    HandOnComposite,
    FootOnBox,
    /// Short horizontal bar, shorter than the hand.
    HandOnHandle,
    /// Hand-sized block.
    HandOnBlock,
}

impl ContactType {
    pub const ALL: [ContactType; 6] = [
        ContactType::HandOnBox,
        ContactType::HandOnCylinder,
        ContactType::HandOnComposite,
        ContactType::FootOnBox,
        ContactType::HandOnHandle,
        ContactType::HandOnBlock,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ContactType::HandOnBox => "hand-on-box",
            ContactType::HandOnCylinder => "hand-on-cylinder",
            ContactType::HandOnComposite => "hand-on-composite",
            ContactType::FootOnBox => "foot-on-box",
            ContactType::HandOnHandle => "hand-on-handle",
            ContactType::HandOnBlock => "hand-on-block",
        }
    }
}

impl FromStr for ContactType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s || c.name().replace('-', "_") == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown contact type `{s}`")))
    }
}

/// Generator settings for [`synthesize`].
#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub contact: ContactType,
    pub seed: u64,
    /// Std. dev. of the random joint rotations of the ground-truth pose, rad.
    pub pose_spread: f64,
    /// Max rotation angle applied to every joint of the initial body, rad.
    pub init_perturbation: f64,
    /// Mean depth of the pelvis, meters.
    pub depth: f64,
    /// Body-object clearance at the contact, meters.
    pub gap: f64,
    /// Where the contact lands along the object's long axis, as a fraction
    /// of its half-length (0 = middle).
    pub contact_offset: f64,
    pub image_width: usize,
    pub image_height: usize,
    pub focal: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            contact: ContactType::HandOnBox,
            seed: 0,
            pose_spread: 0.12,
            init_perturbation: 10f64.to_radians(),
            depth: 2.6,
            gap: 0.003,
            contact_offset: 0.0,
            image_width: 320,
            image_height: 240,
            focal: 300.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pose_spread >= 0.0 && self.init_perturbation >= 0.0 && self.gap >= 0.0) {
            return Err(Error::InvalidConfig(
                "synthesis spreads and gap must be non-negative".into(),
            ));
        }
        if !(-1.0..=1.0).contains(&self.contact_offset) {
            return Err(Error::InvalidConfig("contact offset must lie in [-1, 1]".into()));
        }
        if !(self.depth > 1.0) {
            return Err(Error::InvalidConfig("synthesis depth must exceed 1 m".into()));
        }
        PerspectiveCamera::new(
            self.focal,
            self.focal,
            0.5 * self.image_width as f64,
            0.5 * self.image_height as f64,
            self.image_width,
            self.image_height,
        )?;
        Ok(())
    }
}

/// Object template in its own frame (y up, long axis x), and the template
/// point that should touch the body.
pub fn object_template(contact: ContactType) -> (TriangleMesh, Vector3<f64>) {
    match contact {
        ContactType::HandOnBox | ContactType::FootOnBox => (
            primitives::cuboid_subdivided(Vector3::new(0.30, 0.16, 0.22), 10),
            Vector3::new(0.0, 0.08, 0.0),
        ),
        ContactType::HandOnCylinder => {
            let along_x = Rotation3::from_axis_angle(&Vector3::y_axis(), std::f64::consts::FRAC_PI_2);
            (
                primitives::cylinder(0.06, 0.26, 32, 10).transformed(along_x.matrix(), &Vector3::zeros(), 1.0),
                Vector3::new(0.0, 0.06, 0.0),
            )
        }
        ContactType::HandOnHandle => {
            let along_x = Rotation3::from_axis_angle(&Vector3::y_axis(), std::f64::consts::FRAC_PI_2);
            (
                primitives::cylinder(0.025, 0.09, 24, 8).transformed(along_x.matrix(), &Vector3::zeros(), 1.0),
                Vector3::new(0.0, 0.025, 0.0),
            )
        }
        ContactType::HandOnBlock => (
            primitives::cuboid_subdivided(Vector3::new(0.09, 0.06, 0.12), 8),
            Vector3::new(0.0, 0.03, 0.0),
        ),
        ContactType::HandOnComposite => {
            let base = primitives::cuboid_subdivided(Vector3::new(0.24, 0.10, 0.16), 8);
            let along_x = Rotation3::from_axis_angle(&Vector3::y_axis(), std::f64::consts::FRAC_PI_2);
            let handle = primitives::cylinder(0.015, 0.10, 16, 8).transformed(
                along_x.matrix(),
                &Vector3::new(0.0, 0.065, 0.03),
                1.0,
            );
            (base.merged(&handle), Vector3::new(0.0, 0.08, 0.03))
        }
    }
}

fn random_rotation(rng: &mut impl Rng, max_angle: f64) -> Vector3<f64> {
    let axis = Vector3::from(UnitSphere.sample(rng));
    axis * rng.gen_range(0.0..=max_angle)
}

/// Perturbs every joint by a rotation of random axis and angle at most
/// `max_angle`.
pub fn perturb_pose(params: &BodyParams, max_angle: f64, rng: &mut impl Rng) -> BodyParams {
    let mut out = params.clone();
    for w in &mut out.pose {
        let r = so3::exp(&random_rotation(rng, max_angle)) * so3::exp(w);
        *w = so3::log(&r);
    }
    out
}

fn min_gap(body: &ClosestPointQuery, body_vertices: &[Vector3<f64>], object: &TriangleMesh) -> f64 {
    let oq = ClosestPointQuery::new(object);
    let a = body_vertices
        .iter()
        .map(|v| oq.udf(v).distance)
        .fold(f64::INFINITY, f64::min);
    let b = object
        .vertices()
        .iter()
        .map(|v| body.udf(v).distance)
        .fold(f64::INFINITY, f64::min);
    a.min(b)
}

/// Builds a complete scene: the toy body in a random pose facing the
/// camera, touching a parametric object. Deterministic per seed.
pub fn synthesize(model: &BodyModel, cfg: &SynthConfig) -> Result<Scene> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let camera = PerspectiveCamera::new(
        cfg.focal,
        cfg.focal,
        0.5 * cfg.image_width as f64,
        0.5 * cfg.image_height as f64,
        cfg.image_width,
        cfg.image_height,
    )?;
    let normal = rand_distr::Normal::new(0.0, cfg.pose_spread.max(1e-12)).expect("valid spread");

    // body: rotated into camera coordinates, pelvis at the requested depth
    let mut gt = model.zero_params();
    let yaw = rng.gen_range(-0.5..0.5);
    let root = toy::rig_to_camera() * Rotation3::from_axis_angle(&Vector3::y_axis(), yaw).matrix();
    gt.pose[0] = so3::log(&root);
    for w in gt.pose.iter_mut().skip(1) {
        *w = Vector3::from_fn(|_, _| normal.sample(&mut rng));
    }
    for b in &mut gt.shape {
        *b = rng.gen_range(-1.0..1.0);
    }
    let pelvis = model.shaped_joints(&gt.shape)[0];
    gt.translation = Vector3::new(rng.gen_range(-0.1..0.1), 0.1, cfg.depth) - pelvis;
    let posed = model.forward(&gt);
    let human = model.template_mesh().with_vertices(posed.vertices.clone());
    let body_query = ClosestPointQuery::new(&human);

    // contact site on the body
    let left = rng.gen_bool(0.5);
    let part = match (cfg.contact, left) {
        (ContactType::FootOnBox, true) => toy::part_index("left_foot"),
        (ContactType::FootOnBox, false) => toy::part_index("right_foot"),
        (_, true) => toy::part_index("left_hand"),
        (_, false) => toy::part_index("right_hand"),
    }
    .expect("toy part names") as u8;
    let site: Vec<Vector3<f64>> = posed
        .vertices
        .iter()
        .zip(model.part_labels())
        .filter(|(_, &l)| l == part)
        .map(|(v, _)| *v)
        .collect();
    let down = Vector3::new(0.0, 1.0, 0.0);
    let lowest = site.iter().map(|v| v.dot(&down)).fold(f64::NEG_INFINITY, f64::max);
    let centroid = site.iter().sum::<Vector3<f64>>() / site.len() as f64;
    let anchor = centroid + down * (lowest - centroid.dot(&down));

    // object frame: y up, x along the horizontal direction of the limb
    let (template, mut touch) = object_template(cfg.contact);
    let half_length = template.vertices().iter().map(|v| v.x.abs()).fold(0.0, f64::max);
    touch.x += cfg.contact_offset * half_length;
    let up = -down;
    let heading = {
        let joint = match cfg.contact {
            ContactType::FootOnBox => None,
            _ => model.joint_index(if left { "left_wrist" } else { "right_wrist" }),
        };
        let raw = match joint {
            Some(j) => centroid - posed.joints[j],
            None => Vector3::new(rng.gen_range(-1.0..1.0), 0.0, rng.gen_range(-1.0..1.0)),
        };
        let flat = raw - up * raw.dot(&up);
        let flat = if flat.norm() > 1e-6 {
            flat.normalize()
        } else {
            Vector3::x()
        };
        let jitter = match cfg.contact {
            ContactType::HandOnComposite => 0.0,
            // gripped across the palm
            ContactType::HandOnHandle | ContactType::HandOnBlock => std::f64::consts::FRAC_PI_2,
            _ => rng.gen_range(-0.6..0.6),
        };
        Rotation3::from_axis_angle(&Unit::new_normalize(up), jitter) * flat
    };
    let rotation = Matrix3::from_columns(&[heading, up, heading.cross(&up)]);
    let place = |t: f64| {
        let target = anchor + down * t;
        ObjectPose {
            rotation,
            translation: target - rotation * touch,
            scale: 1.0,
        }
    };
    // walk up from below until the clearance drops under the gap, then bisect
    let clearance = |t: f64| min_gap(&body_query, &posed.vertices, &place(t).apply_mesh(&template));
    let (mut far, mut near) = (0.3, 0.3);
    while clearance(near) > cfg.gap {
        far = near;
        near -= 0.01;
        if near < -0.3 {
            return Err(Error::InvalidConfig(
                "synthesis could not bring the object into contact".into(),
            ));
        }
    }
    for _ in 0..40 {
        let mid = 0.5 * (far + near);
        if clearance(mid) > cfg.gap {
            far = mid;
        } else {
            near = mid;
        }
    }
    let object_pose = place(far);
    let object = object_pose.apply_mesh(&template);

    // masks with mutual occlusion
    let rh = render_silhouette(&human, &camera)?;
    let ro = render_silhouette(&object, &camera)?;
    let (w, h) = (camera.width, camera.height);
    let human_mask = SilhouetteMask::from_fn(w, h, MaskSource::Observed, |x, y| {
        rh.mask.get(x, y) && rh.depth_at(x, y) <= ro.depth_at(x, y)
    });
    let object_mask = SilhouetteMask::from_fn(w, h, MaskSource::Observed, |x, y| {
        ro.mask.get(x, y) && ro.depth_at(x, y) < rh.depth_at(x, y)
    });

    let keypoints = model
        .landmarks()
        .iter()
        .map(|(name, v)| {
            let q: Vector2<f64> = camera.project(&posed.vertices[*v])?;
            Ok(Keypoint2D {
                name: name.clone(),
                pixel: q,
                confidence: 1.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let init = perturb_pose(&gt, cfg.init_perturbation, &mut rng);

    Ok(Scene {
        camera,
        human,
        object,
        template,
        human_mask,
        object_mask,
        keypoints: Some(keypoints),
        init_body: Some(init),
        gt_body: Some(gt),
        object_pose: Some(object_pose),
    })
}
