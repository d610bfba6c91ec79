//! End-to-end commands over scene directories: synthesis, fitting,
//! evaluation, depth-aware scaling and field diagnostics.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::Vector3;

use crate::body::{toy, BodyModel, BodyParams};
use crate::error::{Error, Result};
use crate::fields::{field_diagnostic, FieldDiagnostic, FieldOracle, GridOracle, MeshOracle, NoiseSpec};
use crate::fitting::{joint_fit, FitConfig, FitProblem, FitResult, ObjectPose};
use crate::geometry::{chamfer_distance, procrustes_align, v2v, Similarity, TriangleMesh};
use crate::io::KeyValues;
use crate::scaling::{depth_aware_scale, ScalingRecord};
use crate::scene::{perturb_pose, synthesize, Scene, SynthConfig};

pub const FIT_BODY: &str = "body.obj";
pub const FIT_OBJECT: &str = "object.obj";
pub const FIT_BODY_PARAMS: &str = "body_params.txt";
pub const FIT_OBJECT_POSE: &str = "object_pose.txt";
pub const FIT_CONTACTS: &str = "contacts.txt";
pub const FIT_REPORT: &str = "report.txt";
pub const FIT_CONFIG: &str = "config.txt";
pub const FIT_SUMMARY: &str = "summary.txt";

/// The rig at `path`, or the built-in toy humanoid.
pub fn load_model(path: Option<&Path>) -> Result<BodyModel> {
    match path {
        Some(p) => BodyModel::load(p),
        None => Ok(toy::toy_rig()),
    }
}

pub fn cmd_synth(model: &BodyModel, cfg: &SynthConfig, dir: &Path) -> Result<Scene> {
    let scene = synthesize(model, cfg)?;
    scene.save(dir)?;
    Ok(scene)
}

/// Where the initial body pose comes from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitSource {
    /// `init_body.txt` of the scene.
    Scene,
    /// `gt_body.txt` of the scene.
    GroundTruth,
    /// `gt_body.txt` with every joint rotated by at most this many radians.
    PerturbedGroundTruth(f64),
}

#[derive(Clone, Debug)]
pub struct FitOptions {
    pub config: FitConfig,
    pub noise: NoiseSpec,
    pub init: InitSource,
    /// Starting object pose; estimated from the fields when absent.
    pub object_init: Option<ObjectPose>,
    /// Precomputed field grid used instead of the scene's mesh oracle.
    pub field_grid: Option<PathBuf>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            config: FitConfig::default(),
            noise: NoiseSpec::none(),
            init: InitSource::Scene,
            object_init: None,
            field_grid: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FitOutput {
    pub result: FitResult,
    pub seconds: f64,
}

fn scene_body(scene: &Scene, dir: &Path, init: InitSource, seed: u64) -> Result<BodyParams> {
    let missing = |what| Error::SceneMissing { dir: dir.into(), what };
    match init {
        InitSource::Scene => scene.init_body.clone().ok_or_else(|| missing(crate::scene::INIT_BODY)),
        InitSource::GroundTruth => scene.gt_body.clone().ok_or_else(|| missing(crate::scene::GT_BODY)),
        InitSource::PerturbedGroundTruth(angle) => {
            let gt = scene.gt_body.as_ref().ok_or_else(|| missing(crate::scene::GT_BODY))?;
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
            Ok(perturb_pose(gt, angle, &mut rng))
        }
    }
}

/// Fits the scene in `scene_dir` against its mesh oracle and, if `out_dir`
/// is given, writes meshes, parameters, contacts and the report there.
pub fn cmd_fit(model: &BodyModel, scene_dir: &Path, out_dir: Option<&Path>, opts: &FitOptions) -> Result<FitOutput> {
    let scene = Scene::load(scene_dir)?;
    let cfg = &opts.config;
    cfg.validate()?;
    let init = scene_body(&scene, scene_dir, opts.init, cfg.seed)?;
    init.check(model)?;
    let oracle: Box<dyn FieldOracle> = match &opts.field_grid {
        Some(path) => Box::new(GridOracle::load(path)?),
        None => Box::new(MeshOracle::new(scene.truth(model, cfg.z0)?, opts.noise)?),
    };
    let keypoints = scene.keypoints_for(model)?;
    let problem = FitProblem {
        model,
        oracle: oracle.as_ref(),
        template: &scene.template,
        camera: &scene.camera,
        object_mask: Some(&scene.object_mask),
        human_mask: Some(&scene.human_mask),
        keypoints: keypoints.as_ref(),
    };
    let start = Instant::now();
    let result = joint_fit(&problem, &init, opts.object_init, cfg)?;
    let seconds = start.elapsed().as_secs_f64();
    if let Some(out) = out_dir {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        result.body_mesh(model).save(&out.join(FIT_BODY))?;
        result.object_mesh(&scene.template).save(&out.join(FIT_OBJECT))?;
        result.body.save(&out.join(FIT_BODY_PARAMS))?;
        result.object.save(&out.join(FIT_OBJECT_POSE))?;
        write(&out.join(FIT_CONTACTS), &result.contacts.to_text())?;
        write(&out.join(FIT_REPORT), &result.report.to_text())?;
        cfg.save(&out.join(FIT_CONFIG))?;
        let mut summary = KeyValues::default();
        summary.set("contacts", result.contacts.count());
        summary.set("runtime_s", seconds);
        summary.set("iterations", result.report.rows.len());
        summary.save(&out.join(FIT_SUMMARY))?;
    }
    Ok(FitOutput { result, seconds })
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Vertices that drive the Procrustes alignment before scoring.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AlignMode {
    /// Body and object vertices together.
    Combined,
    BodyOnly,
}

impl AlignMode {
    pub fn name(&self) -> &'static str {
        match self {
            AlignMode::Combined => "combined",
            AlignMode::BodyOnly => "body-only",
        }
    }
}

impl FromStr for AlignMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "combined" => Ok(AlignMode::Combined),
            "body-only" | "body_only" | "body" => Ok(AlignMode::BodyOnly),
            _ => Err(Error::InvalidConfig(format!("unknown alignment mode `{s}`"))),
        }
    }
}

/// Metrics of one scene, in centimeters.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneMetrics {
    pub scene: String,
    pub mode: AlignMode,
    pub body_chamfer: f64,
    pub object_chamfer: f64,
    /// `None` when body topologies differ.
    pub v2v: Option<f64>,
    pub contacts: Option<usize>,
    pub runtime_s: Option<f64>,
}

/// Aligns the prediction to ground truth per `mode` (similarity
/// Procrustes, needs matching vertex counts) and scores both meshes.
/// With differing body topologies only chamfer is reported, unaligned.
pub fn evaluate_meshes(
    body: &TriangleMesh,
    object: &TriangleMesh,
    gt_body: &TriangleMesh,
    gt_object: &TriangleMesh,
    mode: AlignMode,
) -> Result<(f64, f64, Option<f64>)> {
    let same_body = body.num_vertices() == gt_body.num_vertices();
    let same_object = object.num_vertices() == gt_object.num_vertices();
    let align = match mode {
        AlignMode::Combined if same_body && same_object => {
            let src: Vec<Vector3<f64>> = body.vertices().iter().chain(object.vertices()).copied().collect();
            let dst: Vec<Vector3<f64>> = gt_body.vertices().iter().chain(gt_object.vertices()).copied().collect();
            procrustes_align(&src, &dst, true)?
        }
        AlignMode::BodyOnly if same_body => procrustes_align(body.vertices(), gt_body.vertices(), true)?,
        _ => Similarity::identity(),
    };
    let body_v: Vec<_> = body.vertices().iter().map(|v| align.apply(v)).collect();
    let object_v: Vec<_> = object.vertices().iter().map(|v| align.apply(v)).collect();
    let bc = chamfer_distance(&body_v, gt_body.vertices())?;
    let oc = chamfer_distance(&object_v, gt_object.vertices())?;
    let vv = match v2v(&body_v, gt_body.vertices()) {
        Ok(d) => Some(d),
        Err(Error::TopologyMismatch(..)) => None,
        Err(e) => return Err(e),
    };
    Ok((bc, oc, vv))
}

/// Scores the fit in `fit_dir` against the ground truth of `scene_dir`.
pub fn cmd_eval(fit_dir: &Path, scene_dir: &Path, mode: AlignMode) -> Result<SceneMetrics> {
    let scene = Scene::load(scene_dir)?;
    let body = TriangleMesh::load(&fit_dir.join(FIT_BODY))?;
    let object = TriangleMesh::load(&fit_dir.join(FIT_OBJECT))?;
    let (bc, oc, vv) = evaluate_meshes(&body, &object, &scene.human, &scene.object, mode)?;
    let summary = Some(fit_dir.join(FIT_SUMMARY))
        .filter(|p| p.is_file())
        .map(|p| KeyValues::load(&p))
        .transpose()?;
    let name = scene_dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| scene_dir.display().to_string());
    Ok(SceneMetrics {
        scene: name,
        mode,
        body_chamfer: 100.0 * bc,
        object_chamfer: 100.0 * oc,
        v2v: vv.map(|d| 100.0 * d),
        contacts: summary.as_ref().and_then(|s| s.get_usize("contacts").ok()),
        runtime_s: summary.as_ref().and_then(|s| s.get_f64("runtime_s").ok()),
    })
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    /// Sorted by scene name.
    pub scenes: Vec<SceneMetrics>,
}

impl MetricsReport {
    pub fn new(mut scenes: Vec<SceneMetrics>) -> Self {
        scenes.sort_by(|a, b| a.scene.cmp(&b.scene));
        Self { scenes }
    }

    pub fn body_chamfer(&self) -> Option<(f64, f64)> {
        mean_std(&self.scenes.iter().map(|s| s.body_chamfer).collect::<Vec<_>>())
    }

    pub fn object_chamfer(&self) -> Option<(f64, f64)> {
        mean_std(&self.scenes.iter().map(|s| s.object_chamfer).collect::<Vec<_>>())
    }

    pub fn v2v(&self) -> Option<(f64, f64)> {
        mean_std(&self.scenes.iter().filter_map(|s| s.v2v).collect::<Vec<_>>())
    }

    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
        let mut out = String::from("# scene mode body_chamfer_cm object_chamfer_cm v2v_cm contacts runtime_s\n");
        for s in &self.scenes {
            let _ = writeln!(
                out,
                "{} {} {:.4} {:.4} {} {} {}",
                s.scene,
                s.mode.name(),
                s.body_chamfer,
                s.object_chamfer,
                opt(s.v2v),
                s.contacts.map_or("-".to_string(), |c| c.to_string()),
                opt(s.runtime_s),
            );
        }
        for (name, agg) in [("mean", 0), ("std", 1)] {
            let pick = |v: Option<(f64, f64)>| opt(v.map(|(m, s)| if agg == 0 { m } else { s }));
            let _ = writeln!(
                out,
                "# {name} body {} object {} v2v {}",
                pick(self.body_chamfer()),
                pick(self.object_chamfer()),
                pick(self.v2v())
            );
        }
        out
    }
}

/// `dir/name.ext` -> `dir/name{suffix}.ext`.
pub fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}{suffix}"),
    };
    path.with_file_name(name)
}

/// Scales one mesh file to mean depth `z0`, writing the mesh and its
/// record (`<name><suffix>.scale.txt`) next to the input.
pub fn cmd_scale(path: &Path, z0: f64, suffix: &str) -> Result<(PathBuf, ScalingRecord)> {
    let mesh = TriangleMesh::load(path)?;
    let (scaled, record) = depth_aware_scale(&mesh, z0)?;
    let out = suffixed(path, suffix);
    scaled.save(&out)?;
    record.save(&out.with_extension("scale.txt"))?;
    Ok((out, record))
}

/// Field diagnostic of the scene's mesh oracle under `noise`.
pub fn cmd_diagnose(
    model: &BodyModel,
    scene_dir: &Path,
    noise: NoiseSpec,
    samples: usize,
    delta: f64,
    z0: f64,
    seed: u64,
) -> Result<FieldDiagnostic> {
    let scene = Scene::load(scene_dir)?;
    let truth = scene.truth(model, z0)?;
    let oracle = MeshOracle::new(truth.clone(), noise)?;
    Ok(field_diagnostic(&oracle, &truth, samples, delta, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives::{cuboid, icosphere};
    use crate::scene::ContactType;
    use crate::so3;

    #[test]
    fn mean_std_is_population() {
        assert_eq!(mean_std(&[]), None);
        let (m, s) = mean_std(&[1.0, 3.0]).unwrap();
        assert_eq!(m, 2.0);
        assert_eq!(s, 1.0);
        let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap();
        assert_eq!((m, s), (5.0, 2.0));
    }

    #[test]
    fn suffix_goes_before_extension() {
        assert_eq!(suffixed(Path::new("a/b.ply"), "_s"), PathBuf::from("a/b_s.ply"));
        assert_eq!(suffixed(Path::new("mesh"), "_s"), PathBuf::from("mesh_s"));
    }

    #[test]
    fn align_mode_names_round_trip() {
        for mode in [AlignMode::Combined, AlignMode::BodyOnly] {
            assert_eq!(mode.name().parse::<AlignMode>().unwrap(), mode);
        }
        assert!(matches!("diagonal".parse::<AlignMode>(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn evaluation_ignores_similarity_in_combined_mode() {
        let body = icosphere(0.3, 2);
        let object = cuboid(Vector3::new(0.2, 0.1, 0.3)).map_vertices(|v| v + Vector3::new(0.5, 0.0, 0.0));
        let r = so3::exp(&Vector3::new(0.3, -0.5, 0.2));
        let t = Vector3::new(0.1, 2.0, -0.4);
        let moved = |m: &TriangleMesh| m.map_vertices(|v| 1.3 * (r * v) + t);
        let (bc, oc, vv) =
            evaluate_meshes(&moved(&body), &moved(&object), &body, &object, AlignMode::Combined).unwrap();
        assert!(bc < 1e-9 && oc < 1e-9 && vv.unwrap() < 1e-9);
    }

    #[test]
    fn body_only_mode_keeps_object_offset() {
        let body = icosphere(0.3, 2);
        let object = cuboid(Vector3::new(0.2, 0.1, 0.3));
        let shifted = object.map_vertices(|v| v + Vector3::new(0.05, 0.0, 0.0));
        let (bc, oc, _) = evaluate_meshes(&body, &shifted, &body, &object, AlignMode::BodyOnly).unwrap();
        assert!(bc < 1e-12);
        assert!((oc - 0.05).abs() < 1e-12);
    }

    #[test]
    fn mismatched_topology_reports_chamfer_only() {
        let body = icosphere(0.3, 2);
        let coarse = icosphere(0.3, 1);
        let object = cuboid(Vector3::new(0.2, 0.1, 0.3));
        let (bc, oc, vv) = evaluate_meshes(&coarse, &object, &body, &object, AlignMode::Combined).unwrap();
        assert_eq!(vv, None);
        assert_eq!(oc, 0.0);
        assert!(bc > 0.0 && bc < 0.05);
    }

    #[test]
    fn report_text_lists_scenes_sorted() {
        let row = |name: &str, bc: f64| SceneMetrics {
            scene: name.into(),
            mode: AlignMode::Combined,
            body_chamfer: bc,
            object_chamfer: 1.0,
            v2v: None,
            contacts: Some(3),
            runtime_s: None,
        };
        let report = MetricsReport::new(vec![row("b", 2.0), row("a", 4.0)]);
        assert_eq!(report.body_chamfer(), Some((3.0, 1.0)));
        assert_eq!(report.v2v(), None);
        let text = report.to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "a combined 4.0000 1.0000 - 3 -");
        assert_eq!(lines[2], "b combined 2.0000 1.0000 - 3 -");
        assert_eq!(lines[3], "# mean body 3.0000 object 1.0000 v2v -");
        assert_eq!(lines[4], "# std body 1.0000 object 0.0000 v2v -");
    }

    fn scene_dir(tmp: &Path, contact: ContactType, seed: u64) -> (BodyModel, PathBuf) {
        let model = toy::toy_rig();
        let dir = tmp.join(contact.name());
        cmd_synth(
            &model,
            &SynthConfig {
                contact,
                seed,
                ..SynthConfig::default()
            },
            &dir,
        )
        .unwrap();
        (model, dir)
    }

    #[test]
    fn ground_truth_fit_evaluates_to_zero() {
        let tmp = tempfile::tempdir().unwrap();
        let (model, dir) = scene_dir(tmp.path(), ContactType::HandOnCylinder, 3);
        let config = FitConfig {
            human_iterations: 0,
            object_iterations: 0,
            joint_iterations: 0,
            ..FitConfig::default()
        };
        let opts = FitOptions {
            config,
            init: InitSource::GroundTruth,
            object_init: Some(Scene::load(&dir).unwrap().object_pose.unwrap()),
            ..FitOptions::default()
        };
        let fit = tmp.path().join("fit");
        cmd_fit(&model, &dir, Some(&fit), &opts).unwrap();
        for name in [
            FIT_BODY,
            FIT_OBJECT,
            FIT_BODY_PARAMS,
            FIT_OBJECT_POSE,
            FIT_CONTACTS,
            FIT_REPORT,
            FIT_CONFIG,
            FIT_SUMMARY,
        ] {
            assert!(fit.join(name).is_file(), "{name}");
        }
        for mode in [AlignMode::Combined, AlignMode::BodyOnly] {
            let m = cmd_eval(&fit, &dir, mode).unwrap();
            assert!(m.body_chamfer < 1e-7 && m.object_chamfer < 1e-7 && m.v2v.unwrap() < 1e-7);
            assert_eq!(m.scene, "hand-on-cylinder");
        }
    }

    #[test]
    fn missing_scene_file_is_reported() {
        let tmp = tempfile::tempdir().unwrap();
        let (model, dir) = scene_dir(tmp.path(), ContactType::HandOnBox, 1);
        std::fs::remove_file(dir.join(crate::scene::HUMAN_MASK)).unwrap();
        let err = cmd_fit(&model, &dir, None, &FitOptions::default()).unwrap_err();
        assert!(matches!(err, Error::SceneMissing { .. }), "{err}");
    }

    #[test]
    fn diagnostic_grows_with_distance_noise() {
        let tmp = tempfile::tempdir().unwrap();
        let (model, dir) = scene_dir(tmp.path(), ContactType::FootOnBox, 2);
        let mut last = -1.0;
        for sigma_d in [0.0, 0.002, 0.01, 0.05] {
            let noise = NoiseSpec {
                sigma_d,
                ..NoiseSpec::none()
            };
            let d = cmd_diagnose(&model, &dir, noise, 3000, 0.1, crate::scaling::DEFAULT_Z0, 5).unwrap();
            if sigma_d == 0.0 {
                assert_eq!(d.human_udf_error, 0.0);
                assert_eq!(d.part_accuracy, 1.0);
            }
            assert!(d.human_udf_error > last);
            last = d.human_udf_error;
        }
    }

    #[test]
    fn scaling_command_writes_outputs() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("m.obj");
        icosphere(0.2, 1)
            .map_vertices(|v| v + Vector3::new(0.0, 0.0, 4.0))
            .save(&path)
            .unwrap();
        let (out, record) = cmd_scale(&path, 2.0, "_z").unwrap();
        assert_eq!(out, tmp.path().join("m_z.obj"));
        assert!((record.scale - 0.5).abs() < 1e-9);
        let scaled = TriangleMesh::load(&out).unwrap();
        let mean = scaled.vertices().iter().map(|v| v.z).sum::<f64>() / scaled.num_vertices() as f64;
        assert!((mean - 2.0).abs() < 1e-6);
        assert!(tmp.path().join("m_z.scale.txt").is_file());
    }
}
