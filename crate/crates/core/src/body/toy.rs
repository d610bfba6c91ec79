//! Procedural humanoid rig: 15 joints, 15 ellipsoid segments, 14 parts,
//! four shape directions. Built in a y-up frame, facing +z, meters.

use nalgebra::{Matrix3, Rotation3, Vector3};

use super::model::{RigFile, RigJoint, RigLandmark, RigShapeDirection};
use super::{BodyModel, NUM_PARTS};
use crate::geometry::primitives;

pub const PART_NAMES: [&str; NUM_PARTS] = [
    "head",
    "torso",
    "left_upper_arm",
    "right_upper_arm",
    "left_lower_arm",
    "right_lower_arm",
    "left_hand",
    "right_hand",
    "left_upper_leg",
    "right_upper_leg",
    "left_lower_leg",
    "right_lower_leg",
    "left_foot",
    "right_foot",
];

/// 1-based part index by name.
pub fn part_index(name: &str) -> Option<usize> {
    PART_NAMES.iter().position(|&n| n == name).map(|i| i + 1)
}

const JOINTS: [(&str, Option<usize>, [f64; 3]); 15] = [
    ("pelvis", None, [0.0, 0.95, 0.0]),
    ("spine", Some(0), [0.0, 1.15, 0.0]),
    ("neck", Some(1), [0.0, 1.47, 0.0]),
    ("left_shoulder", Some(1), [0.19, 1.40, 0.0]),
    ("left_elbow", Some(3), [0.46, 1.40, 0.0]),
    ("left_wrist", Some(4), [0.70, 1.40, 0.0]),
    ("right_shoulder", Some(1), [-0.19, 1.40, 0.0]),
    ("right_elbow", Some(6), [-0.46, 1.40, 0.0]),
    ("right_wrist", Some(7), [-0.70, 1.40, 0.0]),
    ("left_hip", Some(0), [0.10, 0.90, 0.0]),
    ("left_knee", Some(9), [0.10, 0.50, 0.0]),
    ("left_ankle", Some(10), [0.10, 0.09, 0.0]),
    ("right_hip", Some(0), [-0.10, 0.90, 0.0]),
    ("right_knee", Some(12), [-0.10, 0.50, 0.0]),
    ("right_ankle", Some(13), [-0.10, 0.09, 0.0]),
];

struct Segment {
    joint: usize,
    part: &'static str,
    /// proximal and distal ends of the segment's long axis
    from: [f64; 3],
    to: [f64; 3],
    /// cross-section radii
    width: f64,
    depth: f64,
    /// forward offset of the whole ellipsoid (feet, head)
    shift: [f64; 3],
}

const SEGMENTS: [Segment; 15] = [
    seg(0, "torso", [0.0, 0.82, 0.0], [0.0, 1.10, 0.0], 0.17, 0.11),
    seg(1, "torso", [0.0, 1.08, 0.0], [0.0, 1.47, 0.0], 0.19, 0.115),
    Segment {
        shift: [0.0, 0.0, 0.015],
        ..seg(2, "head", [0.0, 1.45, 0.0], [0.0, 1.74, 0.0], 0.085, 0.10)
    },
    seg(3, "left_upper_arm", [0.17, 1.40, 0.0], [0.48, 1.40, 0.0], 0.048, 0.055),
    seg(4, "left_lower_arm", [0.44, 1.40, 0.0], [0.72, 1.40, 0.0], 0.038, 0.044),
    seg(5, "left_hand", [0.69, 1.40, 0.0], [0.88, 1.40, 0.0], 0.022, 0.048),
    seg(
        6,
        "right_upper_arm",
        [-0.17, 1.40, 0.0],
        [-0.48, 1.40, 0.0],
        0.048,
        0.055,
    ),
    seg(
        7,
        "right_lower_arm",
        [-0.44, 1.40, 0.0],
        [-0.72, 1.40, 0.0],
        0.038,
        0.044,
    ),
    seg(8, "right_hand", [-0.69, 1.40, 0.0], [-0.88, 1.40, 0.0], 0.022, 0.048),
    seg(9, "left_upper_leg", [0.10, 0.93, 0.0], [0.10, 0.47, 0.0], 0.075, 0.085),
    seg(10, "left_lower_leg", [0.10, 0.53, 0.0], [0.10, 0.07, 0.0], 0.055, 0.062),
    Segment {
        shift: [0.0, 0.0, 0.06],
        ..seg(11, "left_foot", [0.10, 0.10, -0.07], [0.10, 0.02, 0.20], 0.045, 0.035)
    },
    seg(
        12,
        "right_upper_leg",
        [-0.10, 0.93, 0.0],
        [-0.10, 0.47, 0.0],
        0.075,
        0.085,
    ),
    seg(
        13,
        "right_lower_leg",
        [-0.10, 0.53, 0.0],
        [-0.10, 0.07, 0.0],
        0.055,
        0.062,
    ),
    Segment {
        shift: [0.0, 0.0, 0.06],
        ..seg(
            14,
            "right_foot",
            [-0.10, 0.10, -0.07],
            [-0.10, 0.02, 0.20],
            0.045,
            0.035,
        )
    },
];

const fn seg(joint: usize, part: &'static str, from: [f64; 3], to: [f64; 3], width: f64, depth: f64) -> Segment {
    Segment {
        joint,
        part,
        from,
        to,
        width,
        depth,
        shift: [0.0; 3],
    }
}

/// Fraction of a segment's length, from its proximal end, over which
/// vertices blend with the parent joint.
const BLEND_SPAN: f64 = 0.2;

const LANDMARKS: [(&str, [f64; 3]); 17] = [
    ("head_top", [0.0, 1.74, 0.015]),
    ("left_shoulder", [0.19, 1.40, 0.0]),
    ("right_shoulder", [-0.19, 1.40, 0.0]),
    ("left_elbow", [0.46, 1.40, 0.0]),
    ("right_elbow", [-0.46, 1.40, 0.0]),
    ("left_wrist", [0.70, 1.40, 0.0]),
    ("right_wrist", [-0.70, 1.40, 0.0]),
    ("left_fingertip", [0.88, 1.40, 0.0]),
    ("right_fingertip", [-0.88, 1.40, 0.0]),
    ("left_hip", [0.10, 0.90, 0.0]),
    ("right_hip", [-0.10, 0.90, 0.0]),
    ("left_knee", [0.10, 0.50, 0.0]),
    ("right_knee", [-0.10, 0.50, 0.0]),
    ("left_ankle", [0.10, 0.09, 0.0]),
    ("right_ankle", [-0.10, 0.09, 0.0]),
    ("left_toe", [0.10, 0.02, 0.26]),
    ("right_toe", [-0.10, 0.02, 0.26]),
];

/// Builds the toy rig with `rings x slices` ellipsoids per segment
/// (`toy_rig()` uses 6 x 8, about 630 vertices).
pub fn toy_rig_with_resolution(rings: usize, slices: usize) -> BodyModel {
    let mut vertices: Vec<Vector3<f64>> = Vec::new();
    let mut faces = Vec::new();
    let mut skinning = Vec::new();
    let mut labels = Vec::new();
    let mut radial: Vec<Vector3<f64>> = Vec::new();
    let joint_pos = |j: usize| Vector3::from(JOINTS[j].2);

    for s in &SEGMENTS {
        let from = Vector3::from(s.from);
        let to = Vector3::from(s.to);
        let axis = to - from;
        let half = 0.5 * axis.norm();
        let dir = axis / (2.0 * half);
        // local z along the bone
        let hint = if dir.y.abs() > 0.9 { Vector3::x() } else { Vector3::y() };
        let e1 = hint.cross(&dir).normalize();
        let e2 = dir.cross(&e1);
        let frame = Matrix3::from_columns(&[e1, e2, dir]);
        let local = primitives::ellipsoid(Vector3::new(s.depth, s.width, half), rings, slices);
        let center = 0.5 * (from + to) + Vector3::from(s.shift);
        let base = vertices.len();
        let part = part_index(s.part).expect("known part") as u8;
        let parent = JOINTS[s.joint].1;
        let bone_origin = joint_pos(s.joint);
        for v in local.vertices() {
            let world = center + frame * v;
            vertices.push(world);
            let along = ((world - from).dot(&dir) / (2.0 * half)).clamp(0.0, 1.0);
            let row = match parent {
                Some(p) if along < BLEND_SPAN => {
                    let wp = 0.5 * (1.0 - along / BLEND_SPAN);
                    vec![(s.joint, 1.0 - wp), (p, wp)]
                }
                _ => vec![(s.joint, 1.0)],
            };
            skinning.push(row);
            labels.push(part);
            let off_axis = world - bone_origin;
            let r = off_axis - dir * off_axis.dot(&dir);
            radial.push(if r.norm() > 1e-9 {
                r.normalize()
            } else {
                Vector3::zeros()
            });
        }
        faces.extend(local.faces().iter().map(|f| f.map(|i| i + base)));
    }

    let joints: Vec<Vector3<f64>> = (0..JOINTS.len()).map(joint_pos).collect();
    let is_arm = |p: u8| (3..=8).contains(&p);
    let is_leg = |p: u8| (9..=14).contains(&p);
    let arm_joint = |j: usize| (3..=8).contains(&j);
    let leg_joint = |j: usize| j >= 9;

    // stature: uniform vertical stretch about the floor
    let stature = RigShapeDirection {
        vertex_offsets: vertices.iter().map(|v| [0.0, 0.03 * v.y, 0.0]).collect(),
        joint_offsets: joints.iter().map(|j| [0.0, 0.03 * j.y, 0.0]).collect(),
    };
    // girth: radial inflation around each bone
    let girth = RigShapeDirection {
        vertex_offsets: radial.iter().map(|r| (0.008 * r).into()).collect(),
        joint_offsets: vec![[0.0; 3]; joints.len()],
    };
    // arm length: stretch arms outward from the shoulders
    let stretch = |x: f64| 0.04 * x.signum() * (x.abs() - 0.19).max(0.0);
    let arm_len = RigShapeDirection {
        vertex_offsets: vertices
            .iter()
            .zip(&labels)
            .map(|(v, &p)| if is_arm(p) { [stretch(v.x), 0.0, 0.0] } else { [0.0; 3] })
            .collect(),
        joint_offsets: joints
            .iter()
            .enumerate()
            .map(|(j, p)| {
                if arm_joint(j) {
                    [stretch(p.x), 0.0, 0.0]
                } else {
                    [0.0; 3]
                }
            })
            .collect(),
    };
    // hip width: legs move sideways
    let hip = |x: f64| 0.012 * x.signum();
    let hip_width = RigShapeDirection {
        vertex_offsets: vertices
            .iter()
            .zip(&labels)
            .map(|(v, &p)| if is_leg(p) { [hip(v.x), 0.0, 0.0] } else { [0.0; 3] })
            .collect(),
        joint_offsets: joints
            .iter()
            .enumerate()
            .map(|(j, p)| if leg_joint(j) { [hip(p.x), 0.0, 0.0] } else { [0.0; 3] })
            .collect(),
    };

    let landmarks = LANDMARKS
        .iter()
        .map(|(name, target)| {
            let t = Vector3::from(*target);
            let vertex = (0..vertices.len())
                .min_by(|&a, &b| (vertices[a] - t).norm().total_cmp(&(vertices[b] - t).norm()))
                .expect("non-empty");
            RigLandmark {
                name: name.to_string(),
                vertex,
            }
        })
        .collect();

    let rig = RigFile {
        name: "toy-humanoid".into(),
        vertices: vertices.iter().map(|v| (*v).into()).collect(),
        faces,
        joints: JOINTS
            .iter()
            .map(|(name, parent, pos)| RigJoint {
                name: name.to_string(),
                parent: *parent,
                position: *pos,
            })
            .collect(),
        skinning,
        shape_basis: vec![stature, girth, arm_len, hip_width],
        part_labels: labels,
        part_names: PART_NAMES.iter().map(|s| s.to_string()).collect(),
        landmarks,
    };
    BodyModel::from_rig(rig).expect("toy rig is valid")
}

pub fn toy_rig() -> BodyModel {
    toy_rig_with_resolution(6, 8)
}

/// Rotation taking the rig's y-up, +z-facing frame into camera coordinates
/// (y down, looking along +z), so the body faces the camera.
pub fn rig_to_camera() -> Matrix3<f64> {
    *Rotation3::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI).matrix()
}
