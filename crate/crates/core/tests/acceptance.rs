//! End-to-end acceptance checks. Prints one `PASS`/`FAIL` line per
//! criterion and exits non-zero if any fails.

use std::time::Instant;

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};

use hoifit::body::{toy, BodyModel, BodyParams, NUM_PARTS};
use hoifit::fields::{
    surface_projection, FieldOracle, FieldSample, HumanSample, MeshOracle, NoiseSpec, SceneTruth, Surface, DEFAULT_Z0,
};
use hoifit::fitting::{
    detect_contacts, energy_contact, energy_human, energy_j2d, energy_object, energy_reg, init_object_pose, joint_fit,
    object_probes, svd_project_so3, FitConfig, FitProblem, Keypoint2D, Keypoints2D, ObjectPose, SilhouetteTerm,
};
use hoifit::geometry::{
    chamfer_distance, mesh_udf, primitives, render_silhouette, sample_surface, v2v, ClosestPointQuery,
    PerspectiveCamera, PointIndex, TriangleMesh,
};
use hoifit::pipeline::{cmd_eval, cmd_fit, cmd_synth, evaluate_meshes, AlignMode, FitOptions, InitSource};
use hoifit::scaling::depth_aware_scale;
use hoifit::scene::{synthesize, ContactType, SynthConfig};
use hoifit::so3;

type Outcome = Result<String, String>;

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("depth-aware scaling suite", scaling_suite),
        ("distance oracle equals brute force", udf_equivalence),
        ("surface projection", projection),
        ("energy gradients match finite differences", gradient_checks),
        ("rotation projection", so3_projection),
        ("object pose initialization", pose_initialization),
        ("joint-fit recovery", joint_fit_recovery),
        ("contact-term ablation", contact_ablation),
        ("evaluation self-consistency", evaluation),
    ];
    // non-flag arguments select criteria by substring
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let t0 = Instant::now();
        let outcome = check();
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} [{secs:.1} s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} [{secs:.1} s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::from(UnitSphere.sample(rng))
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    so3::exp(&(random_unit(rng) * rng.gen_range(0.0..std::f64::consts::PI)))
}

// ---------------------------------------------------------------------------
// scaling

fn scaling_suite() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let (mut depth_err, mut pixel_err, mut reapply_err) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..100 {
        let base = match i % 3 {
            0 => primitives::icosphere(rng.gen_range(0.05..0.5), 2),
            1 => primitives::cuboid_subdivided(
                Vector3::new(rng.gen(), rng.gen(), rng.gen()) * 0.8 + Vector3::repeat(0.1),
                2,
            ),
            _ => toy::toy_rig().template_mesh(),
        };
        let mesh = base.transformed(
            &random_rotation(&mut rng),
            &Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(2.0..15.0),
            ),
            1.0,
        );
        let f = rng.gen_range(200.0..2000.0);
        let camera = PerspectiveCamera::new(
            f,
            f * rng.gen_range(0.9..1.1),
            rng.gen_range(100.0..500.0),
            rng.gen_range(100.0..400.0),
            640,
            480,
        )
        .map_err(|e| e.to_string())?;
        let z0 = rng.gen_range(0.5..5.0);
        let (scaled, _) = depth_aware_scale(&mesh, z0).map_err(|e| e.to_string())?;
        let mean = scaled.vertices().iter().map(|v| v.z).sum::<f64>() / scaled.num_vertices() as f64;
        depth_err = depth_err.max((mean - z0).abs());
        for (a, b) in mesh.vertices().iter().zip(scaled.vertices()) {
            let (pa, pb) = (
                camera.project(a).map_err(|e| e.to_string())?,
                camera.project(b).map_err(|e| e.to_string())?,
            );
            pixel_err = pixel_err.max((pa - pb).norm());
        }
        let (_, again) = depth_aware_scale(&scaled, z0).map_err(|e| e.to_string())?;
        reapply_err = reapply_err.max((again.scale - 1.0).abs());
    }
    let secs = t0.elapsed().as_secs_f64();
    ensure(
        depth_err <= 1e-9 && pixel_err < 1e-9 && reapply_err <= 1e-9 && secs < 5.0,
        format!("depth error {depth_err:.1e} m, pixel shift {pixel_err:.1e} px, |s-1| on reapply {reapply_err:.1e}, {secs:.2} s"),
    )
}

// ---------------------------------------------------------------------------
// distance oracle

fn segment_distance(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Plane distance when the foot point lies inside the triangle, else the
/// nearest edge.
fn triangle_distance(p: &Vector3<f64>, [a, b, c]: [Vector3<f64>; 3]) -> f64 {
    let n = (b - a).cross(&(c - a));
    let nn = n.norm_squared();
    let foot = p - n * ((p - a).dot(&n) / nn);
    let inside = [(a, b), (b, c), (c, a)]
        .iter()
        .all(|(u, v)| (v - u).cross(&(foot - u)).dot(&n) >= 0.0);
    if inside {
        return (p - foot).norm();
    }
    segment_distance(p, &a, &b)
        .min(segment_distance(p, &b, &c))
        .min(segment_distance(p, &c, &a))
}

fn udf_equivalence() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let mut worst = 0.0f64;
    let mut max_faces = 0;
    for i in 0..20 {
        let mesh = match i % 4 {
            0 => primitives::icosphere(rng.gen_range(0.1..1.0), 1),
            1 => primitives::cuboid_subdivided(Vector3::new(rng.gen(), rng.gen(), rng.gen()) + Vector3::repeat(0.1), 2),
            2 => primitives::cylinder(rng.gen_range(0.05..0.5), rng.gen_range(0.2..1.5), 12, 3),
            _ => primitives::ellipsoid(
                Vector3::new(rng.gen(), rng.gen(), rng.gen()) + Vector3::repeat(0.1),
                6,
                12,
            ),
        }
        .transformed(
            &random_rotation(&mut rng),
            &Vector3::new(rng.gen(), rng.gen(), rng.gen()),
            1.0,
        );
        max_faces = max_faces.max(mesh.faces().len());
        let query = ClosestPointQuery::new(&mesh);
        let (lo, hi) = mesh.bounds().expect("non-empty");
        let margin = Vector3::repeat(0.5);
        for _ in 0..10_000 {
            let p = Vector3::from_fn(|k, _| rng.gen_range(lo[k] - margin[k]..hi[k] + margin[k]));
            let brute = (0..mesh.faces().len())
                .map(|f| triangle_distance(&p, mesh.triangle(f)))
                .fold(f64::INFINITY, f64::min);
            worst = worst.max((mesh_udf(&query, &p).distance - brute).abs());
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    ensure(
        worst <= 1e-9 && max_faces <= 200 && secs < 30.0,
        format!("20 meshes up to {max_faces} faces x 10k points, max error {worst:.1e} m, {secs:.1} s"),
    )
}

// ---------------------------------------------------------------------------
// projection

fn projection() -> Outcome {
    let model = toy::toy_rig();
    let scene = synthesize(
        &model,
        &SynthConfig {
            contact: ContactType::HandOnComposite,
            ..SynthConfig::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let truth = scene.truth(&model, DEFAULT_Z0).map_err(|e| e.to_string())?;
    let oracle = MeshOracle::exact(truth);
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    let (lo, hi) = scene.object.bounds().expect("non-empty");
    let mut seeds = Vec::with_capacity(10_000);
    while seeds.len() < 10_000 {
        let p = Vector3::from_fn(|k, _| rng.gen_range(lo[k] - 1.0..hi[k] + 1.0));
        if oracle.udf(Surface::Object, &p).0 < 1.0 {
            seeds.push(p);
        }
    }
    let projected = surface_projection(&oracle, Surface::Object, &seeds, 5, 1.0);
    let rate = projected.points.len() as f64 / seeds.len() as f64;
    let reference = sample_surface(&scene.object, 100_000, &mut rng);
    let chamfer = chamfer_distance(&projected.points, &reference).map_err(|e| e.to_string())?;
    let one_way = |a: &[Vector3<f64>], b: &[Vector3<f64>]| {
        let index = PointIndex::new(b);
        a.iter()
            .map(|p| index.nearest(p).map_or(f64::INFINITY, |(_, d)| d))
            .sum::<f64>()
            / a.len() as f64
    };
    ensure(
        rate >= 0.95 && chamfer < 0.002,
        format!(
            "{:.1}% of 10k seeds within 1e-4 m after 5 steps, chamfer to 100k surface samples {:.2} mm \
             (projected to surface {:.2} mm, surface to projected {:.2} mm)",
            100.0 * rate,
            1e3 * chamfer,
            1e3 * one_way(&projected.points, &reference),
            1e3 * one_way(&reference, &projected.points)
        ),
    )
}

// ---------------------------------------------------------------------------
// gradients

const FD_STEP: f64 = 1e-6;
const FD_STATES: usize = 50;
const FD_TOLERANCE: f64 = 1e-4;
/// States with any quantity this close to a clamp or threshold are redrawn.
const DEGENERATE_MARGIN: f64 = 1e-3;

/// Analytic fields: spheres for both distances, part logits
/// `-|p - anchor_j| / 0.1`, constant pose fields.
struct SmoothOracle {
    human_center: Vector3<f64>,
    human_radius: f64,
    object_center: Vector3<f64>,
    object_radius: f64,
    anchors: [Vector3<f64>; NUM_PARTS],
}

fn sphere_udf(c: &Vector3<f64>, r: f64, p: &Vector3<f64>) -> (f64, Vector3<f64>) {
    let d = p - c;
    let n = d.norm();
    let u = n - r;
    (u.abs(), d / n * u.signum())
}

impl SmoothOracle {
    fn new(rng: &mut ChaCha8Rng, human_center: Vector3<f64>, object_center: Vector3<f64>) -> Self {
        Self {
            human_center,
            human_radius: 0.3,
            object_center,
            object_radius: 0.12,
            anchors: std::array::from_fn(|_| human_center + random_unit(rng) * rng.gen_range(0.2..0.8)),
        }
    }

    /// Whether `p` sits near a kink of any field.
    fn near_kink(&self, p: &Vector3<f64>, delta: f64) -> bool {
        let near = |u: f64| u < DEGENERATE_MARGIN || (u - delta).abs() < DEGENERATE_MARGIN;
        near(self.udf(Surface::Human, p).0)
            || near(self.udf(Surface::Object, p).0)
            || self.anchors.iter().any(|a| (p - a).norm() < DEGENERATE_MARGIN)
    }
}

impl FieldOracle for SmoothOracle {
    fn sample(&self, p: &Vector3<f64>) -> FieldSample {
        let (u_h, grad_u_h) = self.udf(Surface::Human, p);
        let (u_o, grad_u_o) = self.udf(Surface::Object, p);
        let mut part_logits = [0.0; NUM_PARTS];
        let mut part_logit_grads = [Vector3::zeros(); NUM_PARTS];
        for (j, a) in self.anchors.iter().enumerate() {
            let d = p - a;
            part_logits[j] = -d.norm() / 0.1;
            part_logit_grads[j] = -d / (d.norm() * 0.1);
        }
        FieldSample {
            u_h,
            grad_u_h,
            u_o,
            grad_u_o,
            part_logits,
            part_logit_grads,
            rot: Matrix3::identity(),
            centers: [0.0, 0.0, 0.0, 0.0, 0.0],
            out_of_bounds: false,
        }
    }

    fn udf(&self, which: Surface, p: &Vector3<f64>) -> (f64, Vector3<f64>) {
        match which {
            Surface::Human => sphere_udf(&self.human_center, self.human_radius, p),
            Surface::Object => sphere_udf(&self.object_center, self.object_radius, p),
        }
    }
}

fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = norm(analytic).max(norm(numeric));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

fn central_difference(x: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            y[i] = x[i] + FD_STEP;
            let plus = f(&y);
            y[i] = x[i] - FD_STEP;
            let minus = f(&y);
            y[i] = x[i];
            (plus - minus) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Draws states until `FD_STATES` pass `accept`, returning the worst
/// relative error over them.
fn check_states<S>(
    rng: &mut ChaCha8Rng,
    draw: impl Fn(&mut ChaCha8Rng) -> S,
    accept: impl Fn(&S) -> bool,
    errors: impl Fn(&S) -> f64,
) -> Result<f64, String> {
    let mut worst = 0.0f64;
    let mut accepted = 0;
    for _ in 0..FD_STATES * 100 {
        let s = draw(rng);
        if !accept(&s) {
            continue;
        }
        worst = worst.max(errors(&s));
        accepted += 1;
        if accepted == FD_STATES {
            return Ok(worst);
        }
    }
    Err(format!("only {accepted} non-degenerate states found"))
}

fn random_body(model: &BodyModel, rng: &mut ChaCha8Rng, center: &Vector3<f64>) -> BodyParams {
    let mut p = model.zero_params();
    for w in &mut p.pose {
        *w = random_unit(rng) * rng.gen_range(0.0..0.4);
    }
    for b in &mut p.shape {
        *b = rng.gen_range(-1.0..1.0);
    }
    p.translation = center - Vector3::new(0.0, 1.0, 0.0) + random_unit(rng) * rng.gen_range(0.0..0.1);
    p
}

fn body_grad_error(params: &BodyParams, f: impl Fn(&BodyParams) -> (f64, BodyParams)) -> f64 {
    let (nj, ns) = (params.pose.len(), params.shape.len());
    let analytic = f(params).1.to_vec();
    let numeric = central_difference(&params.to_vec(), |x| f(&BodyParams::from_vec(nj, ns, x)).0);
    relative_error(&analytic, &numeric)
}

fn pose_from_vec(base: &ObjectPose, x: &[f64]) -> ObjectPose {
    ObjectPose {
        rotation: so3::exp(&Vector3::new(x[0], x[1], x[2])) * base.rotation,
        translation: base.translation + Vector3::new(x[3], x[4], x[5]),
        scale: base.scale + x[6],
    }
}

fn object_grad_error(pose: &ObjectPose, f: impl Fn(&ObjectPose) -> (f64, hoifit::fitting::ObjectGradient)) -> f64 {
    let g = f(pose).1;
    let analytic: Vec<f64> = g
        .rotation
        .iter()
        .chain(g.translation.iter())
        .copied()
        .chain([g.scale])
        .collect();
    let numeric = central_difference(&[0.0; 7], |x| f(&pose_from_vec(pose, x)).0);
    relative_error(&analytic, &numeric)
}

fn gradient_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(400);
    let model = toy::toy_rig();
    let body_center = Vector3::new(0.0, 0.0, 2.5);
    let oracle = SmoothOracle::new(&mut rng, body_center, body_center + Vector3::new(0.4, 0.1, -0.2));
    let mut report = Vec::new();
    let mut ok = true;
    let mut record = |name: &str, worst: Result<f64, String>| match worst {
        Ok(w) => {
            ok &= w < FD_TOLERANCE;
            report.push(format!("{name} {w:.1e}"));
        }
        Err(e) => {
            ok = false;
            report.push(format!("{name} {e}"));
        }
    };

    let body_cfg = |lambda_h: f64, lambda_part: f64| FitConfig {
        lambda_h,
        lambda_part,
        delta: 0.4,
        ..FitConfig::default()
    };
    let body_ok = |cfg: &FitConfig| {
        let oracle = &oracle;
        let model = &model;
        let delta = cfg.delta;
        move |p: &BodyParams| model.forward(p).vertices.iter().all(|v| !oracle.near_kink(v, delta))
    };
    for (name, cfg) in [
        ("human distance", body_cfg(1.0, 0.0)),
        ("part cross-entropy", body_cfg(0.0, 1.0)),
    ] {
        let worst = check_states(
            &mut rng,
            |r| random_body(&model, r, &body_center),
            body_ok(&cfg),
            |p| body_grad_error(p, |q| energy_human(q, &model, &oracle, &cfg)),
        );
        record(name, worst);
    }

    // object terms on a coarse asymmetric template
    let template = primitives::cuboid_subdivided(Vector3::new(0.3, 0.16, 0.1), 1);
    let object_center = oracle.object_center;
    let draw_pose = |r: &mut ChaCha8Rng| ObjectPose {
        rotation: random_rotation(r),
        translation: object_center + random_unit(r) * r.gen_range(0.0..0.1),
        scale: r.gen_range(0.7..1.4),
    };
    let cfg = FitConfig {
        lambda_occ: 0.0,
        lambda_reg: 0.0,
        delta: 0.4,
        ..FitConfig::default()
    };
    let worst = check_states(
        &mut rng,
        draw_pose,
        |pose| {
            pose.apply_mesh(&template)
                .vertices()
                .iter()
                .all(|v| !oracle.near_kink(v, cfg.delta))
        },
        |pose| object_grad_error(pose, |q| energy_object(q, &template, &oracle, None, None, &cfg)),
    );
    record("object distance", worst);

    let cfg = FitConfig {
        lambda_o: 0.0,
        lambda_occ: 0.0,
        lambda_reg: 1.0,
        ..FitConfig::default()
    };
    let target = object_center + Vector3::new(0.05, -0.02, 0.03);
    let worst = check_states(
        &mut rng,
        draw_pose,
        |_| true,
        |pose| {
            object_grad_error(pose, |q| {
                energy_object(q, &template, &oracle, None, Some(&target), &cfg)
            })
        },
    );
    record("object center", worst);

    // silhouette: observed object and a partly occluding sphere
    let camera = PerspectiveCamera::new(300.0, 300.0, 160.0, 120.0, 320, 240).expect("valid camera");
    let gt = ObjectPose {
        rotation: so3::exp(&Vector3::new(0.3, -0.4, 0.2)),
        translation: Vector3::new(0.05, 0.0, 1.5),
        scale: 1.0,
    };
    let object_mask = render_silhouette(&gt.apply_mesh(&template), &camera)
        .map_err(|e| e.to_string())?
        .mask;
    let occluder = primitives::icosphere(0.06, 2).map_vertices(|v| v + Vector3::new(0.12, 0.03, 1.3));
    let human_mask = render_silhouette(&occluder, &camera).map_err(|e| e.to_string())?.mask;
    let sil = SilhouetteTerm::new(&camera, &object_mask, &human_mask)
        .map_err(|e| e.to_string())?
        .ok_or("empty object mask")?;
    let cfg = FitConfig {
        lambda_o: 0.0,
        lambda_occ: 1.0,
        lambda_reg: 0.0,
        ..FitConfig::default()
    };
    let outside = hoifit::geometry::distance_transform(&object_mask.union(&human_mask).map_err(|e| e.to_string())?);
    let sil_ok = |pose: &ObjectPose| {
        let mesh = pose.apply_mesh(&template);
        let near_line = |x: f64| {
            let f = x - 0.5;
            (f - f.round()).abs() < DEGENERATE_MARGIN
        };
        let vertices_ok = mesh.vertices().iter().all(|v| {
            let Ok(q) = camera.project(v) else { return false };
            let d = hoifit::geometry::sample_bilinear(&outside, 320, 240, &q).0;
            !near_line(q.x) && !near_line(q.y) && (d - 0.5).abs() > DEGENERATE_MARGIN
        });
        // coverage of the render must not change within the difference stencil
        let base = render_silhouette(&mesh, &camera).map(|r| r.mask);
        let stable = (0..7).all(|k| {
            [-1.0, 1.0].iter().all(|s| {
                let mut x = [0.0; 7];
                x[k] = s * FD_STEP;
                render_silhouette(&pose_from_vec(pose, &x).apply_mesh(&template), &camera)
                    .map(|r| r.mask)
                    .ok()
                    == base.as_ref().ok().cloned()
            })
        });
        vertices_ok && stable
    };
    let worst = check_states(
        &mut rng,
        |r| ObjectPose {
            rotation: so3::exp(&(random_unit(r) * r.gen_range(0.0..0.3))) * gt.rotation,
            translation: gt.translation + random_unit(r) * r.gen_range(0.0..0.04),
            scale: r.gen_range(0.85..1.15),
        },
        sil_ok,
        |pose| object_grad_error(pose, |q| energy_object(q, &template, &oracle, Some(&sil), None, &cfg)),
    );
    record("silhouette", worst);

    // contact term over point coordinates
    let worst = check_states(
        &mut rng,
        |r| {
            let mut sets = || -> Vec<Vec<Vector3<f64>>> {
                (0..NUM_PARTS)
                    .map(|j| {
                        let n = if j < 3 { r.gen_range(1..8) } else { 0 };
                        (0..n).map(|_| Vector3::new(r.gen(), r.gen(), r.gen()) * 0.1).collect()
                    })
                    .collect()
            };
            (sets(), sets())
        },
        |(h, o)| {
            // nearest neighbours must be unambiguous and at positive distance
            let clear = |a: &[Vector3<f64>], b: &[Vector3<f64>]| {
                a.iter().all(|p| {
                    let mut d: Vec<f64> = b.iter().map(|q| (p - q).norm()).collect();
                    d.sort_by(f64::total_cmp);
                    d[0] > DEGENERATE_MARGIN && (d.len() < 2 || d[1] - d[0] > DEGENERATE_MARGIN)
                })
            };
            h.iter()
                .zip(o)
                .all(|(a, b)| a.is_empty() || b.is_empty() || (clear(a, b) && clear(b, a)))
        },
        |(h, o)| {
            let flat: Vec<f64> = h.iter().chain(o).flatten().flat_map(|p| [p.x, p.y, p.z]).collect();
            let unflat = |x: &[f64]| {
                let mut k = 0;
                let mut take = |sets: &Vec<Vec<Vector3<f64>>>| -> Vec<Vec<Vector3<f64>>> {
                    sets.iter()
                        .map(|s| {
                            s.iter()
                                .map(|_| {
                                    k += 3;
                                    Vector3::new(x[k - 3], x[k - 2], x[k - 1])
                                })
                                .collect()
                        })
                        .collect()
                };
                let hh = take(h);
                let oo = take(o);
                (hh, oo)
            };
            let e = energy_contact(h, o);
            let analytic: Vec<f64> = e
                .human_grads
                .iter()
                .chain(&e.object_grads)
                .flatten()
                .flat_map(|g| [g.x, g.y, g.z])
                .collect();
            let numeric = central_difference(&flat, |x| {
                let (hh, oo) = unflat(x);
                energy_contact(&hh, &oo).value
            });
            relative_error(&analytic, &numeric)
        },
    );
    record("contact", worst);

    // keypoints, with residuals on both sides of the robust threshold
    let cam = PerspectiveCamera::new(300.0, 300.0, 160.0, 120.0, 320, 240).expect("valid camera");
    let huber = 50.0;
    let keypoint_state = |r: &mut ChaCha8Rng| {
        let params = random_body(&model, r, &body_center);
        let posed = model.forward(&params);
        let detections: Vec<Keypoint2D> = model
            .landmarks()
            .iter()
            .map(|(name, vi)| Keypoint2D {
                name: name.clone(),
                pixel: cam.project(&posed.vertices[*vi]).unwrap_or_default()
                    + Vector2::new(r.gen_range(-80.0..80.0), r.gen_range(-80.0..80.0)),
                confidence: r.gen(),
            })
            .collect();
        let kps = Keypoints2D::for_model(&model, &detections).expect("valid detections");
        (random_body(&model, r, &body_center), kps)
    };
    let worst = check_states(
        &mut rng,
        keypoint_state,
        |(params, kps)| {
            let posed = model.forward(params);
            model.landmarks().iter().zip(&kps.points).all(|((_, vi), kp)| {
                cam.project(&posed.vertices[*vi])
                    .is_ok_and(|q| ((q - kp.pixel).norm() - huber).abs() > DEGENERATE_MARGIN)
            })
        },
        |(params, kps)| body_grad_error(params, |q| energy_j2d(q, &model, &cam, kps, huber)),
    );
    record("keypoints", worst);

    let worst = check_states(
        &mut rng,
        |r| {
            (
                random_body(&model, r, &body_center),
                random_body(&model, r, &body_center),
            )
        },
        |_| true,
        |(params, init)| body_grad_error(params, |q| energy_reg(q, init)),
    );
    record("prior", worst);

    ensure(
        ok,
        format!(
            "worst relative error per term over {FD_STATES} states: {}",
            report.join(", ")
        ),
    )
}

// ---------------------------------------------------------------------------
// rotations

fn so3_projection() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let r = random_rotation(&mut rng);
        let p = svd_project_so3(&r).map_err(|e| e.to_string())?;
        let c = rng.gen_range(0.01..100.0);
        let q = svd_project_so3(&(r * c)).map_err(|e| e.to_string())?;
        let pp = svd_project_so3(&p).map_err(|e| e.to_string())?;
        worst = worst.max((p - r).amax()).max((q - r).amax()).max((pp - p).amax());
    }
    // nearest rotation to reflections, against a rotation-vector grid
    let steps = 60;
    let spacing = 2.0 * std::f64::consts::PI / steps as f64;
    let grid: Vec<Matrix3<f64>> = (0..=steps)
        .flat_map(|i| (0..=steps).flat_map(move |j| (0..=steps).map(move |k| (i, j, k))))
        .map(|(i, j, k)| Vector3::new(i as f64, j as f64, k as f64) * spacing - Vector3::repeat(std::f64::consts::PI))
        .filter(|w| w.norm() <= std::f64::consts::PI)
        .map(|w| so3::exp(&w))
        .collect();
    let mut det_ok = true;
    let mut grid_gap = 0.0f64;
    let mut grid_angle = 0.0f64;
    for _ in 0..5 {
        let sv = Matrix3::from_diagonal(&Vector3::new(
            rng.gen_range(1.0..2.0),
            rng.gen_range(1.0..2.0),
            -rng.gen_range(0.2..0.8),
        ));
        let m = random_rotation(&mut rng) * sv * random_rotation(&mut rng);
        let p = svd_project_so3(&m).map_err(|e| e.to_string())?;
        det_ok &= (p.determinant() - 1.0).abs() < 1e-9;
        let (best, dist) = grid
            .iter()
            .map(|g| (g, (g - m).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty grid");
        grid_gap = grid_gap.max((p - m).norm() - dist);
        grid_angle = grid_angle.max(so3::geodesic(&p, best));
    }
    ensure(
        worst <= 1e-9 && det_ok && grid_gap <= 1e-12 && grid_angle <= spacing,
        format!(
            "idempotence/scale error {worst:.1e} on 1000 rotations; reflections: det +1, no grid rotation closer, {grid_angle:.3} rad from the grid optimum (spacing {spacing:.3})"
        ),
    )
}

// ---------------------------------------------------------------------------
// pose initialization

fn pose_initialization() -> Outcome {
    let model = toy::toy_rig();
    let cfg = FitConfig::default();
    let (mut rot_err, mut trans_err) = (0.0f64, 0.0f64);
    let mut noisy_err = 0.0f64;
    let mut min_samples = usize::MAX;
    for (i, contact) in ContactType::ALL.iter().enumerate() {
        let scene = synthesize(
            &model,
            &SynthConfig {
                contact: *contact,
                seed: 40 + i as u64,
                ..SynthConfig::default()
            },
        )
        .map_err(|e| e.to_string())?;
        let gt = scene.object_pose.ok_or("scene without pose")?;
        let body = model
            .forward(scene.gt_body.as_ref().ok_or("scene without body")?)
            .vertices;
        let depth = body.iter().map(|v| v.z).sum::<f64>() / body.len() as f64;
        let (lo, hi) = scene.human.bounds().expect("non-empty");
        let margin = Vector3::repeat(0.6);
        let truth = scene.truth(&model, cfg.z0).map_err(|e| e.to_string())?;
        for (noise, exact) in [
            (NoiseSpec::none(), true),
            (
                NoiseSpec {
                    sigma_r: 0.2,
                    seed: i as u64,
                    ..NoiseSpec::none()
                },
                false,
            ),
        ] {
            let oracle = MeshOracle::new(truth.clone(), noise).map_err(|e| e.to_string())?;
            let probes = object_probes(
                &oracle,
                &(lo - margin),
                &(hi + margin),
                cfg.probe_seeds,
                cfg.probe_iterations,
                cfg.probe_step_clamp,
                i as u64,
            );
            let init = init_object_pose(&oracle, &probes, cfg.shell, &scene.template, depth, cfg.z0)
                .map_err(|e| e.to_string())?;
            let angle = so3::geodesic(&init.pose.rotation, &gt.rotation);
            if exact {
                rot_err = rot_err.max(angle);
                trans_err = trans_err.max((init.pose.translation - gt.translation).norm());
            } else {
                noisy_err = noisy_err.max(angle);
                min_samples = min_samples.min(init.samples);
            }
        }
    }
    ensure(
        rot_err < 1e-6 && trans_err < 1e-6 && noisy_err < 0.05 && min_samples >= 500,
        format!(
            "exact fields: rotation {rot_err:.1e} rad, translation {trans_err:.1e} m; rotation noise 0.2 rad over >= {min_samples} samples: {noisy_err:.4} rad"
        ),
    )
}

// ---------------------------------------------------------------------------
// joint fit

struct Recovery {
    body_v2v: f64,
    object_chamfer: f64,
}

fn perturb_object(gt: &ObjectPose, centroid: &Vector3<f64>, rng: &mut ChaCha8Rng) -> ObjectPose {
    let rot = so3::exp(&(random_unit(rng) * rng.gen_range(0.0..20f64.to_radians())));
    let offset = random_unit(rng) * rng.gen_range(0.0..0.10);
    ObjectPose {
        rotation: rot * gt.rotation,
        translation: rot * (gt.translation - centroid) + centroid + offset,
        scale: gt.scale,
    }
}

fn recover(model: &BodyModel, seed: u64, noise: NoiseSpec) -> Result<Recovery, String> {
    let contact = ContactType::ALL[seed as usize % ContactType::ALL.len()];
    let scene = synthesize(
        model,
        &SynthConfig {
            contact,
            seed,
            ..SynthConfig::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let cfg = FitConfig::default();
    let oracle =
        MeshOracle::new(scene.truth(model, cfg.z0).map_err(|e| e.to_string())?, noise).map_err(|e| e.to_string())?;
    let gt = scene.object_pose.ok_or("scene without pose")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
    let init_object = perturb_object(&gt, &scene.object.centroid(), &mut rng);
    let keypoints = scene.keypoints_for(model).map_err(|e| e.to_string())?;
    let problem = FitProblem {
        model,
        oracle: &oracle,
        template: &scene.template,
        camera: &scene.camera,
        object_mask: Some(&scene.object_mask),
        human_mask: Some(&scene.human_mask),
        keypoints: keypoints.as_ref(),
    };
    let init_body = scene.init_body.clone().ok_or("scene without initial body")?;
    let fit = joint_fit(&problem, &init_body, Some(init_object), &cfg).map_err(|e| e.to_string())?;
    Ok(Recovery {
        body_v2v: v2v(fit.body_mesh(model).vertices(), scene.human.vertices()).map_err(|e| e.to_string())?,
        object_chamfer: chamfer_distance(fit.object_mesh(&scene.template).vertices(), scene.object.vertices())
            .map_err(|e| e.to_string())?,
    })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn joint_fit_recovery() -> Outcome {
    let t0 = Instant::now();
    let model = toy::toy_rig();
    let mut worst_body = 0.0f64;
    let mut worst_object = 0.0f64;
    let mut noisy = Vec::new();
    for seed in 0..20 {
        let r = recover(&model, seed, NoiseSpec::none())?;
        worst_body = worst_body.max(r.body_v2v);
        worst_object = worst_object.max(r.object_chamfer);
        let noise = NoiseSpec {
            sigma_d: 0.005,
            flip_prob: 0.05,
            seed,
            ..NoiseSpec::none()
        };
        noisy.push(recover(&model, seed, noise)?.object_chamfer);
    }
    let noisy_median = median(&mut noisy);
    let secs = t0.elapsed().as_secs_f64();
    ensure(
        worst_body < 0.01 && worst_object < 0.01 && noisy_median < 0.03 && secs < 600.0,
        format!(
            "exact fields, worst of 20: body v2v {:.2} cm, object chamfer {:.2} cm; noisy median object chamfer {:.2} cm; {:.0} s",
            100.0 * worst_body,
            100.0 * worst_object,
            100.0 * noisy_median,
            secs
        ),
    )
}

// ---------------------------------------------------------------------------
// contact ablation

/// Fields of an object stretched along its long axis, so the distance term
/// cannot pin its position along that axis, and a center field that
/// points off the true position by `shift`.
struct Sliding {
    inner: MeshOracle,
    shift: Vector3<f64>,
}

impl FieldOracle for Sliding {
    fn sample(&self, p: &Vector3<f64>) -> FieldSample {
        let mut s = self.inner.sample(p);
        for k in 0..3 {
            s.centers[2 + k] += self.shift[k];
        }
        s
    }

    fn udf(&self, which: Surface, p: &Vector3<f64>) -> (f64, Vector3<f64>) {
        self.inner.udf(which, p)
    }

    fn human(&self, p: &Vector3<f64>) -> HumanSample {
        self.inner.human(p)
    }
}

const ABLATION_REACH: f64 = 0.5;

fn ablation_scene(model: &BodyModel, seed: u64) -> Result<(f64, f64), String> {
    let mut cfg = FitConfig {
        lambda_occ: 0.0,
        lambda_reg: 0.0,
        optimize_scale: false,
        ..FitConfig::default()
    };
    let contact = [ContactType::HandOnHandle, ContactType::HandOnBlock][seed as usize % 2];
    let scene = synthesize(
        model,
        &SynthConfig {
            contact,
            seed,
            ..SynthConfig::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let gt = scene.object_pose.ok_or("scene without pose")?;
    let axis: Vector3<f64> = gt.rotation.column(0).into();
    let stretched = scene.template.with_vertices(
        scene
            .template
            .vertices()
            .iter()
            .map(|v| {
                let mut w = *v;
                if w.x.abs() > 1e-9 {
                    w.x += ABLATION_REACH * w.x.signum();
                }
                w
            })
            .collect(),
    );
    let labels = model.part_labels().to_vec();
    let swept = SceneTruth::new(
        scene.human.clone(),
        gt.apply_mesh(&stretched),
        labels.clone(),
        gt.rotation,
        cfg.z0,
    )
    .map_err(|e| e.to_string())?;
    let exact = SceneTruth::new(scene.human.clone(), scene.object.clone(), labels, gt.rotation, cfg.z0)
        .map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slide = rng.gen_range(0.05..0.06) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let center_offset = Vector3::from_fn(|k, _| exact.centers[2 + k] - swept.centers[2 + k]);
    let oracle = Sliding {
        inner: MeshOracle::exact(swept),
        shift: center_offset + axis * slide,
    };
    let gt_sets = detect_contacts(
        scene.human.vertices(),
        model.part_labels(),
        scene.object.vertices(),
        &MeshOracle::exact(exact),
        cfg.epsilon,
    );

    let tilt = random_unit(&mut rng);
    let drift = random_unit(&mut rng);
    let rot = so3::exp(&(tilt * 5f64.to_radians() * rng.gen_range(0.5..1.0)));
    let centroid = scene.object.centroid();
    let init_object = ObjectPose {
        rotation: rot * gt.rotation,
        translation: rot * (gt.translation - centroid)
            + centroid
            + axis * slide
            + drift * 0.02 * rng.gen_range(0.5..1.0),
        scale: gt.scale,
    };
    let keypoints = scene.keypoints_for(model).map_err(|e| e.to_string())?;
    let problem = FitProblem {
        model,
        oracle: &oracle,
        template: &scene.template,
        camera: &scene.camera,
        object_mask: None,
        human_mask: None,
        keypoints: keypoints.as_ref(),
    };
    let init_body = scene.init_body.clone().ok_or("scene without initial body")?;
    let mut contact_energy = [0.0; 2];
    for (slot, lambda_c) in [1.0, 0.0].into_iter().enumerate() {
        cfg.lambda_c = lambda_c;
        cfg.use_contacts = lambda_c > 0.0;
        let fit = joint_fit(&problem, &init_body, Some(init_object), &cfg).map_err(|e| e.to_string())?;
        let body = fit.body_mesh(model);
        let object = fit.object_mesh(&scene.template);
        let (h, o) = gt_sets.points(body.vertices(), object.vertices());
        contact_energy[slot] = energy_contact(&h, &o).value;
    }
    Ok((contact_energy[0], contact_energy[1]))
}

fn contact_ablation() -> Outcome {
    let model = toy::toy_rig();
    let mut wins = 0;
    let mut gains = Vec::new();
    for seed in 0..20 {
        let (with, without) = ablation_scene(&model, seed)?;
        if with < without {
            wins += 1;
        }
        gains.push(100.0 * (without - with));
    }
    let gain = median(&mut gains);
    ensure(
        wins >= 18,
        format!("contact term lowers the contact chamfer in {wins} of 20 scenes (median reduction {gain:.2} cm)"),
    )
}

// ---------------------------------------------------------------------------
// evaluation

fn evaluation() -> Outcome {
    let model = toy::toy_rig();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let scene_dir = dir.path().join("scene");
    let scene = cmd_synth(
        &model,
        &SynthConfig {
            contact: ContactType::HandOnBlock,
            seed: 3,
            ..SynthConfig::default()
        },
        &scene_dir,
    )
    .map_err(|e| e.to_string())?;
    // a fit started at ground truth stays there
    let fit_dir = dir.path().join("fit");
    let options = FitOptions {
        init: InitSource::GroundTruth,
        object_init: scene.object_pose,
        config: FitConfig {
            human_iterations: 0,
            object_iterations: 0,
            joint_iterations: 0,
            ..FitConfig::default()
        },
        ..FitOptions::default()
    };
    cmd_fit(&model, &scene_dir, Some(&fit_dir), &options).map_err(|e| e.to_string())?;
    let mut gt_worst = 0.0f64;
    for mode in [AlignMode::Combined, AlignMode::BodyOnly] {
        let m = cmd_eval(&fit_dir, &scene_dir, mode).map_err(|e| e.to_string())?;
        gt_worst = gt_worst
            .max(m.body_chamfer)
            .max(m.object_chamfer)
            .max(m.v2v.unwrap_or(f64::INFINITY));
    }

    // similarity applied to the whole prediction
    let mut rng = ChaCha8Rng::seed_from_u64(900);
    let body = scene.human.clone();
    let object = scene.object.clone();
    let mut invariance = 0.0f64;
    for _ in 0..5 {
        let (r, t, s) = (
            random_rotation(&mut rng),
            random_unit(&mut rng) * 2.0,
            rng.gen_range(0.5..2.0),
        );
        let moved = |m: &TriangleMesh| m.map_vertices(|v| s * (r * v) + t);
        let (bc, oc, vv) = evaluate_meshes(
            &moved(&body),
            &moved(&object),
            &scene.human,
            &scene.object,
            AlignMode::Combined,
        )
        .map_err(|e| e.to_string())?;
        invariance = invariance.max(bc).max(oc).max(vv.unwrap_or(f64::INFINITY));
    }

    // 5 cm object shift on a coarse box whose vertices are farther apart
    let gt_object = primitives::cuboid(Vector3::new(0.3, 0.2, 0.25)).map_vertices(|v| v + Vector3::new(0.4, 0.9, 2.5));
    let shifted = gt_object.map_vertices(|v| v + Vector3::new(0.0, 0.05, 0.0));
    let (_, oc, _) = evaluate_meshes(&scene.human, &shifted, &scene.human, &gt_object, AlignMode::BodyOnly)
        .map_err(|e| e.to_string())?;
    let shift_cm = 100.0 * oc;
    ensure(
        gt_worst < 1e-9 && invariance < 1e-9 && (shift_cm - 5.0).abs() < 1e-9,
        format!(
            "ground truth scores {gt_worst:.1e} cm, similarity-moved prediction {:.1e} cm, 5 cm object shift reported as {shift_cm:.2} cm",
            100.0 * invariance
        ),
    )
}
