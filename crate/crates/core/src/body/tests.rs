use super::*;
use crate::so3;
use approx::assert_relative_eq;
use nalgebra::{Matrix3, Rotation3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn two_bone() -> BodyModel {
    let rig = RigFile {
        name: "two-bone".into(),
        vertices: vec![[2.0, 0.0, 0.0], [2.0, 0.1, 0.0], [2.0, 0.0, 0.1], [0.5, 0.0, 0.0]],
        faces: vec![[0, 1, 2], [3, 0, 1]],
        joints: vec![
            RigJoint {
                name: "root".into(),
                parent: None,
                position: [0.0; 3],
            },
            RigJoint {
                name: "elbow".into(),
                parent: Some(0),
                position: [1.0, 0.0, 0.0],
            },
        ],
        skinning: vec![vec![(1, 1.0)], vec![(1, 1.0)], vec![(1, 1.0)], vec![(0, 1.0)]],
        shape_basis: vec![],
        part_labels: vec![1, 1, 1, 2],
        part_names: vec![],
        landmarks: vec![],
    };
    BodyModel::from_rig(rig).unwrap()
}

fn random_params(model: &BodyModel, rng: &mut ChaCha8Rng, scale: f64) -> BodyParams {
    let mut p = model.zero_params();
    for w in &mut p.pose {
        *w = Vector3::new(
            rng.gen_range(-scale..scale),
            rng.gen_range(-scale..scale),
            rng.gen_range(-scale..scale),
        );
    }
    p.translation = Vector3::new(
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(2.0..4.0),
    );
    for b in &mut p.shape {
        *b = rng.gen_range(-2.0..2.0);
    }
    p
}

#[test]
fn zero_pose_reproduces_template() {
    let m = toy::toy_rig();
    let posed = m.forward(&m.zero_params());
    for (a, b) in posed.vertices.iter().zip(m.template()) {
        assert_relative_eq!(a, b, epsilon = 1e-12);
    }
}

#[test]
fn translation_shifts_every_vertex() {
    let m = toy::toy_rig();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = random_params(&m, &mut rng, 0.5);
    let mut q = p.clone();
    let shift = Vector3::new(0.3, -0.2, 0.7);
    q.translation += shift;
    let a = m.forward(&p).vertices;
    let b = m.forward(&q).vertices;
    for (x, y) in a.iter().zip(&b) {
        assert_relative_eq!(x + shift, *y, epsilon = 1e-12);
    }
}

#[test]
fn child_rotation_moves_distal_vertices_only() {
    let m = two_bone();
    let mut p = m.zero_params();
    p.pose[1] = Vector3::z() * std::f64::consts::FRAC_PI_2;
    let v = m.forward(&p).vertices;
    assert_relative_eq!(v[0], Vector3::new(1.0, 1.0, 0.0), epsilon = 1e-12);
    assert_relative_eq!(v[1], Vector3::new(0.9, 1.0, 0.0), epsilon = 1e-12);
    assert_relative_eq!(v[3], Vector3::new(0.5, 0.0, 0.0), epsilon = 1e-12);
}

#[test]
fn root_rotation_is_equivariant() {
    let m = toy::toy_rig();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut p = random_params(&m, &mut rng, 0.4);
    p.pose[0] = Vector3::zeros();
    p.translation = Vector3::zeros();
    let base = m.forward(&p).vertices;
    let r: Matrix3<f64> = *Rotation3::from_euler_angles(0.3, -1.1, 0.7).matrix();
    p.pose[0] = so3::log(&r);
    let rotated = m.forward(&p).vertices;
    let j0 = m.shaped_joints(&p.shape)[0];
    for (a, b) in base.iter().zip(&rotated) {
        assert_relative_eq!(r * (a - j0) + j0, *b, epsilon = 1e-10);
    }
}

#[test]
fn backward_matches_central_differences() {
    let m = toy::toy_rig_with_resolution(4, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let p = random_params(&m, &mut rng, 1.2);
        let proj: Vec<Vector3<f64>> = (0..m.num_vertices())
            .map(|_| {
                Vector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect();
        let energy = |q: &BodyParams| -> f64 { m.forward(q).vertices.iter().zip(&proj).map(|(v, g)| v.dot(g)).sum() };
        let posed = m.forward(&p);
        let analytic = m.backward(&p, &posed, &proj).to_vec();
        let x = p.to_vec();
        let h = 1e-6;
        let numeric: Vec<f64> = (0..x.len())
            .map(|i| {
                let mut a = x.clone();
                let mut b = x.clone();
                a[i] += h;
                b[i] -= h;
                let fa = energy(&BodyParams::from_vec(m.num_joints(), m.num_shapes(), &a));
                let fb = energy(&BodyParams::from_vec(m.num_joints(), m.num_shapes(), &b));
                (fa - fb) / (2.0 * h)
            })
            .collect();
        let diff: f64 = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let norm: f64 = numeric.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(diff / norm < 1e-4, "relative error {}", diff / norm);
    }
}

#[test]
fn part_labels_partition_the_surface() {
    let m = toy::toy_rig();
    let total: usize = (1..=NUM_PARTS)
        .map(|j| {
            let pts = part_points(m.template(), m.part_labels(), j).unwrap();
            assert!(!pts.is_empty(), "part {j} empty");
            pts.len()
        })
        .sum();
    assert_eq!(total, m.num_vertices());
    assert!(matches!(
        part_points(m.template(), m.part_labels(), 0),
        Err(crate::Error::PartIndexOutOfRange(0))
    ));
    assert!(part_points(m.template(), m.part_labels(), NUM_PARTS + 1).is_err());
}

#[test]
fn toy_rig_is_plausible() {
    let m = toy::toy_rig();
    assert_eq!(m.num_joints(), 15);
    assert_eq!(m.num_shapes(), 4);
    let (lo, hi) = m.template_mesh().bounds().unwrap();
    assert!((hi.y - lo.y - 1.74).abs() < 0.05, "height {}", hi.y - lo.y);
    assert!(hi.x - lo.x > 1.6);
    let kp = body_keypoints(&m, m.template());
    let lw = kp.iter().find(|(n, _)| n == "left_wrist").unwrap().1;
    assert!((lw - Vector3::new(0.70, 1.40, 0.0)).norm() < 0.06);
}

#[test]
fn rig_json_round_trip() {
    let m = toy::toy_rig();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rig.json");
    m.save(&path).unwrap();
    let back = BodyModel::load(&path).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = random_params(&m, &mut rng, 0.8);
    let a = m.forward(&p).vertices;
    let b = back.forward(&p).vertices;
    for (x, y) in a.iter().zip(&b) {
        assert_relative_eq!(x, y, epsilon = 1e-12);
    }
    assert_eq!(back.landmarks(), m.landmarks());
}

#[test]
fn params_key_value_round_trip() {
    let m = toy::toy_rig();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let p = random_params(&m, &mut rng, 1.0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("body.txt");
    p.save(&path).unwrap();
    assert_eq!(BodyParams::load(&path).unwrap(), p);
}

#[test]
fn rejects_unnormalized_weights() {
    let mut rig = two_bone().to_rig();
    rig.skinning[0] = vec![(1, 0.7)];
    assert!(BodyModel::from_rig(rig).is_err());
}
