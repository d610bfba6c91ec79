//! Point-set metrics used for contacts and evaluation: Chamfer distance,
//! vertex-to-vertex error and similarity Procrustes alignment.

use nalgebra::{Matrix3, Vector3, SVD};

use super::PointIndex;
use crate::error::{Error, Result};

/// Symmetric Chamfer distance together with the nearest-neighbor assignments
/// that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct ChamferMatches {
    pub value: f64,
    /// For every point of A, the index of its nearest point in B.
    pub a_to_b: Vec<usize>,
    /// For every point of B, the index of its nearest point in A.
    pub b_to_a: Vec<usize>,
}

/// Mean of the two directional mean nearest-neighbor distances, in the
/// input units (not squared).
pub fn chamfer_distance(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> Result<f64> {
    chamfer_with_matches(a, b).map(|m| m.value)
}

pub fn chamfer_with_matches(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> Result<ChamferMatches> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    let directional = |from: &[Vector3<f64>], to: &[Vector3<f64>]| {
        let index = PointIndex::new(to);
        let mut sum = 0.0;
        let idx: Vec<usize> = from
            .iter()
            .map(|p| {
                let (i, d) = index.nearest(p).expect("non-empty");
                sum += d;
                i
            })
            .collect();
        (sum / from.len() as f64, idx)
    };
    let (ab, a_to_b) = directional(a, b);
    let (ba, b_to_a) = directional(b, a);
    Ok(ChamferMatches {
        value: 0.5 * (ab + ba),
        a_to_b,
        b_to_a,
    })
}

/// Mean per-vertex Euclidean distance between corresponding vertices.
pub fn v2v(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::TopologyMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(a.iter().zip(b).map(|(p, q)| (p - q).norm()).sum::<f64>() / a.len() as f64)
}

/// `x -> scale * rotation * x + translation`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Similarity {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub scale: f64,
}

impl Similarity {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            scale: 1.0,
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.scale * (self.rotation * p) + self.translation
    }
}

/// Least-squares similarity (or rigid, when `with_scale` is false) transform
/// taking `source` onto the corresponding `target` points (Umeyama).
pub fn procrustes_align(source: &[Vector3<f64>], target: &[Vector3<f64>], with_scale: bool) -> Result<Similarity> {
    if source.len() != target.len() {
        return Err(Error::DimensionMismatch {
            expected: (source.len(), 3),
            actual: (target.len(), 3),
        });
    }
    if source.len() < 3 {
        return Err(Error::DegenerateConfiguration("need at least three correspondences"));
    }
    let n = source.len() as f64;
    let mu_s = source.iter().sum::<Vector3<f64>>() / n;
    let mu_t = target.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    let mut src_cov = Matrix3::zeros();
    let mut var_s = 0.0;
    for (s, t) in source.iter().zip(target) {
        let ds = s - mu_s;
        cov += (t - mu_t) * ds.transpose();
        src_cov += ds * ds.transpose();
        var_s += ds.norm_squared();
    }
    cov /= n;
    src_cov /= n;
    var_s /= n;

    let mut spread = src_cov.symmetric_eigenvalues().as_slice().to_vec();
    spread.sort_by(|a, b| b.total_cmp(a));
    if !(spread[0] > 0.0) || spread[1] <= 1e-12 * spread[0] {
        return Err(Error::DegenerateConfiguration(
            "source points are collinear or coincident",
        ));
    }

    let svd = SVD::new(cov, true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let sv = svd.singular_values;
    let mut d = Vector3::repeat(1.0);
    if (u * v_t).determinant() < 0.0 {
        d[sv.imin()] = -1.0;
    }
    let rotation = u * Matrix3::from_diagonal(&d) * v_t;
    let scale = if with_scale { sv.dot(&d) / var_s } else { 1.0 };
    let translation = mu_t - scale * (rotation * mu_s);
    Ok(Similarity {
        rotation,
        translation,
        scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::so3;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_chamfer(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> f64 {
        let dir = |x: &[Vector3<f64>], y: &[Vector3<f64>]| {
            x.iter()
                .map(|p| y.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min))
                .sum::<f64>()
                / x.len() as f64
        };
        0.5 * (dir(a, b) + dir(b, a))
    }

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|_| {
                Vector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect()
    }

    #[test]
    fn chamfer_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_cloud(&mut rng, 100);
        assert_eq!(chamfer_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(chamfer_distance(&[Vector3::zeros()], &[Vector3::x()]).unwrap(), 1.0);
        let b = random_cloud(&mut rng, 100);
        assert_relative_eq!(
            chamfer_distance(&a, &b).unwrap(),
            brute_chamfer(&a, &b),
            epsilon = 1e-12
        );
        assert!(matches!(chamfer_distance(&a, &[]), Err(Error::EmptySet)));
    }

    #[test]
    fn v2v_requires_matching_counts() {
        assert!(matches!(
            v2v(&[Vector3::zeros()], &[]),
            Err(Error::TopologyMismatch(1, 0))
        ));
        assert_eq!(v2v(&[Vector3::zeros()], &[Vector3::y() * 2.0]).unwrap(), 2.0);
    }

    #[test]
    fn procrustes_identity_and_degenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_cloud(&mut rng, 20);
        let t = procrustes_align(&a, &a, true).unwrap();
        assert_relative_eq!(t.rotation, Matrix3::identity(), epsilon = 1e-12);
        assert_relative_eq!(t.translation, Vector3::zeros(), epsilon = 1e-12);
        assert_relative_eq!(t.scale, 1.0, epsilon = 1e-12);
        let line: Vec<_> = (0..10).map(|i| Vector3::new(1.0, 2.0, 3.0) * i as f64).collect();
        assert!(matches!(
            procrustes_align(&line, &line, true),
            Err(Error::DegenerateConfiguration(_))
        ));
        assert!(procrustes_align(&a[..2], &a[..2], true).is_err());
    }

    #[test]
    fn procrustes_recovers_known_similarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let src = random_cloud(&mut rng, 30);
            let r = so3::exp(&Vector3::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            ));
            let t = Vector3::new(rng.gen(), rng.gen(), rng.gen()) * 3.0;
            let s = rng.gen_range(0.3..3.0);
            let dst: Vec<_> = src.iter().map(|p| s * (r * p) + t).collect();
            let est = procrustes_align(&src, &dst, true).unwrap();
            assert_relative_eq!(est.rotation, r, epsilon = 1e-9);
            assert_relative_eq!(est.translation, t, epsilon = 1e-9);
            assert_relative_eq!(est.scale, s, epsilon = 1e-9);
            assert_relative_eq!(est.rotation.determinant(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn procrustes_never_returns_a_reflection() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let src = random_cloud(&mut rng, 25);
        let mirrored: Vec<_> = src.iter().map(|p| Vector3::new(-p.x, p.y, p.z)).collect();
        let est = procrustes_align(&src, &mirrored, true).unwrap();
        assert_relative_eq!(est.rotation.determinant(), 1.0, epsilon = 1e-9);
        assert_relative_eq!(
            est.rotation.transpose() * est.rotation,
            Matrix3::identity(),
            epsilon = 1e-9
        );
    }

    proptest! {
        #[test]
        fn chamfer_is_symmetric_and_shift_lipschitz(
            seed in 0u64..1000,
            shift in prop::array::uniform3(-0.3f64..0.3),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_cloud(&mut rng, 40);
            let b = random_cloud(&mut rng, 55);
            let ab = chamfer_distance(&a, &b).unwrap();
            prop_assert!((ab - chamfer_distance(&b, &a).unwrap()).abs() < 1e-12);
            let delta = Vector3::from(shift);
            let moved: Vec<_> = b.iter().map(|p| p + delta).collect();
            let shifted = chamfer_distance(&a, &moved).unwrap();
            prop_assert!((shifted - ab).abs() <= delta.norm() + 1e-12);
        }
    }
}
