//! WebAssembly bindings behind `www/index.html`. Every export returns a
//! flat `Float64Array` whose layout is documented on the function.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use wasm_bindgen::prelude::*;

use hoifit::body::toy;
use hoifit::fields::{surface_projection, FieldOracle, MeshOracle, SceneTruth, Surface, DEFAULT_Z0};
use hoifit::fitting::svd_project_so3;
use hoifit::geometry::PerspectiveCamera;
use hoifit::scaling::depth_aware_scale;
use hoifit::scene::{object_template, ContactType};
use hoifit::so3;

const SLICE_HALF_WIDTH: f64 = 0.2;
const SLICE_CLAMP: f64 = 0.1;

fn camera() -> PerspectiveCamera {
    PerspectiveCamera::new(300.0, 300.0, 160.0, 120.0, 320, 240).expect("valid camera")
}

/// Toy body facing the camera with its pelvis at `depth`, scaled to mean
/// depth `z0`.
///
/// Layout: `[s, mean_before, mean_after, max_pixel_shift, n,
/// n x (u, v), n x (x, z) before, n x (x, z) after]`.
#[wasm_bindgen]
pub fn scaling_view(depth: f64, z0: f64) -> Result<Vec<f64>, JsError> {
    let model = toy::toy_rig();
    let mut params = model.zero_params();
    params.pose[0] = so3::log(&toy::rig_to_camera());
    let pelvis = toy::rig_to_camera() * model.rest_joints()[0];
    params.translation = Vector3::new(0.0, 0.2, depth) - pelvis;
    let mesh = model.lbs_forward(&params);
    let (scaled, record) = depth_aware_scale(&mesh, z0).map_err(|e| JsError::new(&e.to_string()))?;
    let cam = camera();
    let n = mesh.num_vertices();
    let mut pixels = Vec::with_capacity(2 * n);
    let mut shift = 0.0f64;
    for (a, b) in mesh.vertices().iter().zip(scaled.vertices()) {
        let pa = cam.project(a).map_err(|e| JsError::new(&e.to_string()))?;
        let pb = cam.project(b).map_err(|e| JsError::new(&e.to_string()))?;
        shift = shift.max((pa - pb).norm());
        pixels.extend([pb.x, pb.y]);
    }
    let mean_after = scaled.vertices().iter().map(|v| v.z).sum::<f64>() / n as f64;
    let mut out = vec![record.scale, record.mean_depth, mean_after, shift, n as f64];
    out.extend(pixels);
    out.extend(mesh.vertices().iter().flat_map(|v| [v.x, v.z]));
    out.extend(scaled.vertices().iter().flat_map(|v| [v.x, v.z]));
    Ok(out)
}

fn object_oracle(shape: &str) -> Result<MeshOracle, JsError> {
    let contact: ContactType = shape.parse().map_err(|e: hoifit::Error| JsError::new(&e.to_string()))?;
    let (object, _) = object_template(contact);
    let object = object.map_vertices(|v| v - object.centroid());
    let model = toy::toy_rig();
    // keep the body far outside the slice
    let body = model.template_mesh().map_vertices(|v| v + Vector3::new(0.0, 0.0, 10.0));
    let truth = SceneTruth::new(
        body,
        object,
        model.part_labels().to_vec(),
        nalgebra::Matrix3::identity(),
        DEFAULT_Z0,
    )
    .map_err(|e| JsError::new(&e.to_string()))?;
    Ok(MeshOracle::exact(truth))
}

/// Object distance field on the `z = 0` plane through a template, and
/// `seeds` random points of that plane projected onto the surface.
///
/// Layout: `[res, res x res clamped distances (row-major, y down),
/// seeds, seeds x (x, y), kept, kept x (x, y)]`, coordinates in meters
/// within `[-0.2, 0.2]`.
#[wasm_bindgen]
pub fn udf_slice(shape: &str, res: usize, seeds: usize, iterations: usize, seed: u32) -> Result<Vec<f64>, JsError> {
    let oracle = object_oracle(shape)?;
    let res = res.clamp(8, 256);
    let mut out = vec![res as f64];
    for row in 0..res {
        for col in 0..res {
            let x = -SLICE_HALF_WIDTH + 2.0 * SLICE_HALF_WIDTH * (col as f64 + 0.5) / res as f64;
            let y = -SLICE_HALF_WIDTH + 2.0 * SLICE_HALF_WIDTH * (row as f64 + 0.5) / res as f64;
            out.push(oracle.udf(Surface::Object, &Vector3::new(x, y, 0.0)).0.min(SLICE_CLAMP));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.into());
    let points: Vec<Vector3<f64>> = (0..seeds)
        .map(|_| {
            Vector3::new(
                rng.gen_range(-SLICE_HALF_WIDTH..SLICE_HALF_WIDTH),
                rng.gen_range(-SLICE_HALF_WIDTH..SLICE_HALF_WIDTH),
                0.0,
            )
        })
        .collect();
    out.push(seeds as f64);
    out.extend(points.iter().flat_map(|p| [p.x, p.y]));
    let projected = surface_projection(&oracle, Surface::Object, &points, iterations, 1.0);
    out.push(projected.points.len() as f64);
    out.extend(projected.points.iter().flat_map(|p| [p.x, p.y]));
    Ok(out)
}

/// Averages `n` noisy copies of a random rotation (axis uniform, angle
/// `|N(0, sigma)|`) and projects the mean back onto SO(3).
///
/// Layout: `[mean per-sample error, error of the average, det]`, radians.
#[wasm_bindgen]
pub fn rotation_average(sigma: f64, n: usize, seed: u32) -> Result<Vec<f64>, JsError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.into());
    let axis = |rng: &mut ChaCha8Rng| Vector3::from(UnitSphere.sample(rng));
    let truth = so3::exp(&(axis(&mut rng) * rng.gen_range(0.0..std::f64::consts::PI)));
    let noise = Normal::new(0.0, sigma.max(0.0)).map_err(|e| JsError::new(&e.to_string()))?;
    let n = n.max(1);
    let mut sum = nalgebra::Matrix3::zeros();
    let mut single = 0.0;
    for _ in 0..n {
        let r = so3::exp(&(axis(&mut rng) * noise.sample(&mut rng).abs())) * truth;
        single += so3::geodesic(&r, &truth);
        sum += r;
    }
    let avg = svd_project_so3(&(sum / n as f64)).map_err(|e| JsError::new(&e.to_string()))?;
    Ok(vec![single / n as f64, so3::geodesic(&avg, &truth), avg.determinant()])
}
