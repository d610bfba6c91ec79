//! Rotation helpers shared by the body rig and the object pose: axis-angle
//! exponential/log maps, the derivative of the exponential map, geodesic
//! distances, and projection of an arbitrary 3x3 matrix onto SO(3).

use nalgebra::{Matrix3, Vector3, SVD};

use crate::error::{Error, Result};

pub fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Rodrigues' formula.
pub fn exp(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = w.norm_squared();
    let k = hat(w);
    if theta2 < 1e-16 {
        // second-order Taylor expansion
        return Matrix3::identity() + k + 0.5 * k * k;
    }
    let theta = theta2.sqrt();
    let a = theta.sin() / theta;
    let b = (1.0 - theta.cos()) / theta2;
    Matrix3::identity() + a * k + b * k * k
}

/// Axis-angle vector of a rotation matrix, angle in [0, pi].
pub fn log(r: &Matrix3<f64>) -> Vector3<f64> {
    let cos = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = cos.acos();
    let v = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    if theta < 1e-8 {
        return 0.5 * v;
    }
    if std::f64::consts::PI - theta < 1e-6 {
        // near pi the antisymmetric part vanishes; read the axis off R + I
        let m = r + Matrix3::identity();
        let col = (0..3)
            .max_by(|&a, &b| m.column(a).norm().total_cmp(&m.column(b).norm()))
            .unwrap();
        let mut axis: Vector3<f64> = m.column(col).normalize();
        if axis.dot(&v) < 0.0 {
            axis = -axis;
        }
        return theta * axis;
    }
    v * (theta / (2.0 * theta.sin()))
}

/// Partial derivatives `dR/dw_i` of `exp(w)` for i = 0, 1, 2.
pub fn exp_derivatives(w: &Vector3<f64>) -> [Matrix3<f64>; 3] {
    let theta2 = w.norm_squared();
    let basis = [Vector3::x(), Vector3::y(), Vector3::z()];
    if theta2 < 1e-16 {
        return basis.map(|e| hat(&e));
    }
    let r = exp(w);
    let w_hat = hat(w);
    let i_minus_r = Matrix3::identity() - r;
    std::array::from_fn(|i| {
        let c = w.cross(&(i_minus_r * basis[i]));
        (w[i] * w_hat + hat(&c)) * r / theta2
    })
}

/// Geodesic (angular) distance between two rotations in radians.
pub fn geodesic(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let rel = a.transpose() * b;
    let cos = ((rel.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    // acos loses precision near zero; use the antisymmetric part there
    if cos > 0.999 {
        let v = Vector3::new(
            rel[(2, 1)] - rel[(1, 2)],
            rel[(0, 2)] - rel[(2, 0)],
            rel[(1, 0)] - rel[(0, 1)],
        );
        return (0.5 * v.norm()).clamp(-1.0, 1.0).asin();
    }
    cos.acos()
}

/// Nearest rotation in Frobenius norm.
///
/// With `M = U S V^T`, returns `U V^T`, flipping the singular vector of the
/// smallest singular value when that product is a reflection.
pub fn svd_project(m: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::SingularMatrix);
    }
    let svd = SVD::new(*m, true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::SingularMatrix),
    };
    let s = svd.singular_values;
    // nalgebra does not guarantee ordering; sort indices by singular value
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let largest = s[order[0]];
    let tol = 1e-12 * largest.max(f64::MIN_POSITIVE);
    if largest <= 0.0 || s[order[1]] <= tol {
        return Err(Error::SingularMatrix);
    }
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        // a reflection with a vanishing smallest singular value has two
        // equally near rotations
        if s[order[2]] <= tol {
            return Err(Error::SingularMatrix);
        }
        d[(order[2], order[2])] = -1.0;
    }
    Ok(u * d * v_t)
}
