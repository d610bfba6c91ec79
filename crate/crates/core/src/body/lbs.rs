//! Forward kinematics + linear blend skinning and its reverse-mode
//! derivative.

use nalgebra::{Matrix3, Vector3};

use super::{BodyModel, BodyParams};
use crate::geometry::TriangleMesh;
use crate::so3;

/// Intermediate state of a forward pass, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct PosedBody {
    pub vertices: Vec<Vector3<f64>>,
    /// World positions of the joints.
    pub joints: Vec<Vector3<f64>>,
    shaped: Vec<Vector3<f64>>,
    rest_joints: Vec<Vector3<f64>>,
    local_rot: Vec<Matrix3<f64>>,
    global_rot: Vec<Matrix3<f64>>,
}

impl BodyModel {
    pub fn shaped_template(&self, shape: &[f64]) -> Vec<Vector3<f64>> {
        let mut v = self.template.clone();
        for (b, &beta) in shape.iter().enumerate() {
            if beta != 0.0 {
                for (vi, d) in v.iter_mut().zip(&self.shape_dirs[b]) {
                    *vi += beta * d;
                }
            }
        }
        v
    }

    pub fn shaped_joints(&self, shape: &[f64]) -> Vec<Vector3<f64>> {
        let mut j = self.joints.clone();
        for (b, &beta) in shape.iter().enumerate() {
            if beta != 0.0 {
                for (ji, d) in j.iter_mut().zip(&self.joint_shape_dirs[b]) {
                    *ji += beta * d;
                }
            }
        }
        j
    }

    pub fn forward(&self, params: &BodyParams) -> PosedBody {
        debug_assert_eq!(params.pose.len(), self.num_joints());
        let shaped = self.shaped_template(&params.shape);
        let rest_joints = self.shaped_joints(&params.shape);
        let nj = self.num_joints();
        let local_rot: Vec<Matrix3<f64>> = params.pose.iter().map(so3::exp).collect();
        let mut global_rot = Vec::with_capacity(nj);
        let mut global_t: Vec<Vector3<f64>> = Vec::with_capacity(nj);
        for j in 0..nj {
            match self.parents[j] {
                None => {
                    global_rot.push(local_rot[j]);
                    global_t.push(rest_joints[j]);
                }
                Some(p) => {
                    let rp: Matrix3<f64> = global_rot[p];
                    global_rot.push(rp * local_rot[j]);
                    global_t.push(rp * (rest_joints[j] - rest_joints[p]) + global_t[p]);
                }
            }
        }
        let vertices = shaped
            .iter()
            .zip(&self.skinning)
            .map(|(x, row)| {
                let mut out = params.translation;
                for &(k, w) in row {
                    out += w * (global_rot[k] * (x - rest_joints[k]) + global_t[k]);
                }
                out
            })
            .collect();
        let joints = global_t.iter().map(|t| t + params.translation).collect();
        PosedBody {
            vertices,
            joints,
            shaped,
            rest_joints,
            local_rot,
            global_rot,
        }
    }

    /// Posed surface for `params`.
    pub fn lbs_forward(&self, params: &BodyParams) -> TriangleMesh {
        self.template_mesh().with_vertices(self.forward(params).vertices)
    }

    /// Vector-Jacobian product: given `dE/dv` for every posed vertex, returns
    /// `dE/d(params)` laid out like [`BodyParams`].
    pub fn backward(&self, params: &BodyParams, posed: &PosedBody, grad_vertices: &[Vector3<f64>]) -> BodyParams {
        let nj = self.num_joints();
        let mut d_global_rot = vec![Matrix3::zeros(); nj];
        let mut d_global_t = vec![Vector3::zeros(); nj];
        let mut d_rest_joints = vec![Vector3::zeros(); nj];
        let mut d_shaped = vec![Vector3::zeros(); posed.shaped.len()];
        let mut d_translation = Vector3::zeros();

        for (i, g) in grad_vertices.iter().enumerate() {
            if g.x == 0.0 && g.y == 0.0 && g.z == 0.0 {
                continue;
            }
            d_translation += g;
            let x = posed.shaped[i];
            for &(k, w) in &self.skinning[i] {
                let wg = w * g;
                d_global_rot[k] += wg * (x - posed.rest_joints[k]).transpose();
                d_global_t[k] += wg;
                let back = posed.global_rot[k].transpose() * wg;
                d_rest_joints[k] -= back;
                d_shaped[i] += back;
            }
        }
        let mut d_local_rot = vec![Matrix3::zeros(); nj];
        for j in (0..nj).rev() {
            match self.parents[j] {
                None => {
                    d_local_rot[j] = d_global_rot[j];
                    d_rest_joints[j] += d_global_t[j];
                }
                Some(p) => {
                    let rp = posed.global_rot[p];
                    let dgr = d_global_rot[j];
                    let dgt = d_global_t[j];
                    d_global_rot[p] += dgr * posed.local_rot[j].transpose();
                    d_local_rot[j] = rp.transpose() * dgr;
                    d_global_rot[p] += dgt * (posed.rest_joints[j] - posed.rest_joints[p]).transpose();
                    let back = rp.transpose() * dgt;
                    d_rest_joints[j] += back;
                    d_rest_joints[p] -= back;
                    d_global_t[p] += dgt;
                }
            }
        }

        let pose = (0..nj)
            .map(|j| {
                let dr = so3::exp_derivatives(&params.pose[j]);
                Vector3::new(
                    d_local_rot[j].component_mul(&dr[0]).sum(),
                    d_local_rot[j].component_mul(&dr[1]).sum(),
                    d_local_rot[j].component_mul(&dr[2]).sum(),
                )
            })
            .collect();
        let shape = (0..self.num_shapes())
            .map(|b| {
                let from_vertices: f64 = self.shape_dirs[b].iter().zip(&d_shaped).map(|(d, g)| d.dot(g)).sum();
                let from_joints: f64 = self.joint_shape_dirs[b]
                    .iter()
                    .zip(&d_rest_joints)
                    .map(|(d, g)| d.dot(g))
                    .sum();
                from_vertices + from_joints
            })
            .collect();
        BodyParams {
            pose,
            translation: d_translation,
            shape,
        }
    }
}
