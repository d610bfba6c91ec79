//! Parametric meshes centered at the origin: spheres, boxes, cylinders.
//! All faces are wound counter-clockwise seen from outside.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::Vector3;

use super::TriangleMesh;

/// Latitude/longitude sphere with `rings >= 2` latitude bands and
/// `segments >= 3` longitude slices, axis-scaled by `radii`.
pub fn ellipsoid(radii: Vector3<f64>, rings: usize, segments: usize) -> TriangleMesh {
    assert!(rings >= 2 && segments >= 3);
    let mut vertices = vec![Vector3::new(0.0, 0.0, radii.z)];
    for r in 1..rings {
        let phi = PI * r as f64 / rings as f64;
        for s in 0..segments {
            let th = 2.0 * PI * s as f64 / segments as f64;
            vertices.push(Vector3::new(
                radii.x * phi.sin() * th.cos(),
                radii.y * phi.sin() * th.sin(),
                radii.z * phi.cos(),
            ));
        }
    }
    vertices.push(Vector3::new(0.0, 0.0, -radii.z));
    let south = vertices.len() - 1;
    let ring = |r: usize, s: usize| 1 + (r - 1) * segments + s % segments;
    let mut faces = Vec::new();
    for s in 0..segments {
        faces.push([0, ring(1, s), ring(1, s + 1)]);
    }
    for r in 1..rings - 1 {
        for s in 0..segments {
            let (a, b, c, d) = (ring(r, s), ring(r + 1, s), ring(r + 1, s + 1), ring(r, s + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    for s in 0..segments {
        faces.push([south, ring(rings - 1, s + 1), ring(rings - 1, s)]);
    }
    TriangleMesh::new(vertices, faces).expect("ellipsoid is well formed")
}

pub fn uv_sphere(radius: f64, rings: usize, segments: usize) -> TriangleMesh {
    ellipsoid(Vector3::repeat(radius), rings, segments)
}

/// Icosahedron subdivided `level` times and pushed onto the sphere.
pub fn icosphere(radius: f64, level: usize) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vector3<f64>> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<Vector3<f64>>| {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                vertices.push(((vertices[a] + vertices[b]) * 0.5).normalize());
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let vertices = vertices.into_iter().map(|v| v * radius).collect();
    TriangleMesh::new(vertices, faces).expect("icosphere is well formed")
}

/// Axis-aligned box with full edge lengths `size`, each face split into an
/// `n x n` grid of quads.
pub fn cuboid_subdivided(size: Vector3<f64>, n: usize) -> TriangleMesh {
    assert!(n >= 1);
    let mut index: HashMap<[usize; 3], usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut vid = |c: [usize; 3], vertices: &mut Vec<Vector3<f64>>| {
        *index.entry(c).or_insert_with(|| {
            vertices.push(Vector3::new(
                (c[0] as f64 / n as f64 - 0.5) * size.x,
                (c[1] as f64 / n as f64 - 0.5) * size.y,
                (c[2] as f64 / n as f64 - 0.5) * size.z,
            ));
            vertices.len() - 1
        })
    };
    let mut faces = Vec::new();
    // (fixed axis, side, u axis, v axis) with u x v pointing outward
    let sides = [
        (0, n, 1, 2),
        (0, 0, 2, 1),
        (1, n, 2, 0),
        (1, 0, 0, 2),
        (2, n, 0, 1),
        (2, 0, 1, 0),
    ];
    for (axis, side, ua, va) in sides {
        let lattice = |i: usize, j: usize| {
            let mut c = [0usize; 3];
            c[axis] = side;
            c[ua] = i;
            c[va] = j;
            c
        };
        for i in 0..n {
            for j in 0..n {
                let a = vid(lattice(i, j), &mut vertices);
                let b = vid(lattice(i + 1, j), &mut vertices);
                let c = vid(lattice(i + 1, j + 1), &mut vertices);
                let d = vid(lattice(i, j + 1), &mut vertices);
                faces.push([a, b, c]);
                faces.push([a, c, d]);
            }
        }
    }
    TriangleMesh::new(vertices, faces).expect("cuboid is well formed")
}

pub fn cuboid(size: Vector3<f64>) -> TriangleMesh {
    cuboid_subdivided(size, 1)
}

/// Capped cylinder along z, centered at the origin.
pub fn cylinder(radius: f64, height: f64, segments: usize, stacks: usize) -> TriangleMesh {
    assert!(segments >= 3 && stacks >= 1);
    let mut vertices = Vec::new();
    for k in 0..=stacks {
        let z = (k as f64 / stacks as f64 - 0.5) * height;
        for s in 0..segments {
            let th = 2.0 * PI * s as f64 / segments as f64;
            vertices.push(Vector3::new(radius * th.cos(), radius * th.sin(), z));
        }
    }
    let bottom = vertices.len();
    vertices.push(Vector3::new(0.0, 0.0, -0.5 * height));
    let top = vertices.len();
    vertices.push(Vector3::new(0.0, 0.0, 0.5 * height));
    let at = |k: usize, s: usize| k * segments + s % segments;
    let mut faces = Vec::new();
    for k in 0..stacks {
        for s in 0..segments {
            let (a, b, c, d) = (at(k, s), at(k, s + 1), at(k + 1, s + 1), at(k + 1, s));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    for s in 0..segments {
        faces.push([bottom, at(0, s + 1), at(0, s)]);
        faces.push([top, at(stacks, s), at(stacks, s + 1)]);
    }
    TriangleMesh::new(vertices, faces).expect("cylinder is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn signed_volume(m: &TriangleMesh) -> f64 {
        (0..m.faces().len())
            .map(|f| {
                let [a, b, c] = m.triangle(f);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    #[test]
    fn volumes_are_positive_and_close_to_analytic() {
        let box_mesh = cuboid_subdivided(Vector3::new(0.2, 0.3, 0.4), 3);
        assert_relative_eq!(signed_volume(&box_mesh), 0.024, epsilon = 1e-12);
        assert_eq!(box_mesh.num_vertices(), 4usize.pow(3) - 2usize.pow(3));
        let s = icosphere(1.0, 3);
        assert_relative_eq!(signed_volume(&s), 4.0 / 3.0 * PI, max_relative = 0.02);
        let c = cylinder(0.1, 0.5, 32, 4);
        assert_relative_eq!(signed_volume(&c), PI * 0.01 * 0.5, max_relative = 0.01);
        let e = ellipsoid(Vector3::new(0.1, 0.2, 0.3), 16, 24);
        assert!(signed_volume(&e) > 0.0);
    }
}
