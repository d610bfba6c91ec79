//! Nearest-surface queries over triangle meshes.

use nalgebra::Vector3;

use super::TriangleMesh;

/// Closest point on triangle `abc` to `p` (Ericson, Real-Time Collision
/// Detection, 5.1.5). Handles all seven Voronoi regions explicitly.
pub fn closest_point_on_triangle(
    p: &Vector3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
) -> Vector3<f64> {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

#[derive(Clone, Copy, Debug)]
struct Aabb {
    min: Vector3<f64>,
    max: Vector3<f64>,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            min: Vector3::repeat(f64::INFINITY),
            max: Vector3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Vector3<f64>) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    fn merge(&self, o: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&o.min),
            max: self.max.sup(&o.max),
        }
    }

    fn distance_squared(&self, p: &Vector3<f64>) -> f64 {
        let d = (self.min - p).sup(&Vector3::zeros()).sup(&(p - self.max));
        d.norm_squared()
    }
}

#[derive(Clone, Debug)]
enum Node {
    Leaf { bounds: Aabb, start: usize, end: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

const LEAF_SIZE: usize = 4;

/// Result of a nearest-surface query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceHit {
    pub point: Vector3<f64>,
    pub distance: f64,
    pub face: usize,
}

/// Unsigned distance and its gradient at a query point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UdfSample {
    pub distance: f64,
    /// `(p - closest) / distance`, or zero when `on_surface`.
    pub gradient: Vector3<f64>,
    pub closest: Vector3<f64>,
    pub on_surface: bool,
}

/// Median-split AABB tree over the faces of a mesh. Immutable after
/// construction.
#[derive(Clone, Debug)]
pub struct ClosestPointQuery {
    triangles: Vec<[Vector3<f64>; 3]>,
    face_ids: Vec<usize>,
    nodes: Vec<Node>,
}

impl ClosestPointQuery {
    /// # Panics
    /// If the mesh has no faces.
    pub fn new(mesh: &TriangleMesh) -> Self {
        assert!(!mesh.faces().is_empty(), "closest-point index needs at least one face");
        let triangles: Vec<_> = (0..mesh.faces().len()).map(|f| mesh.triangle(f)).collect();
        let centroids: Vec<_> = triangles.iter().map(|t| (t[0] + t[1] + t[2]) / 3.0).collect();
        let mut face_ids: Vec<usize> = (0..triangles.len()).collect();
        let mut nodes = Vec::with_capacity(2 * triangles.len() / LEAF_SIZE + 1);
        build(&triangles, &centroids, &mut face_ids, 0, triangles.len(), &mut nodes);
        let triangles = face_ids.iter().map(|&f| triangles[f]).collect();
        Self {
            triangles,
            face_ids,
            nodes,
        }
    }

    pub fn closest(&self, p: &Vector3<f64>) -> SurfaceHit {
        let mut best = SurfaceHit {
            point: *p,
            distance: f64::INFINITY,
            face: usize::MAX,
        };
        let mut best_d2 = f64::INFINITY;
        let mut stack: Vec<usize> = Vec::with_capacity(64);
        stack.push(0);
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if node.bounds().distance_squared(p) > best_d2 {
                continue;
            }
            match *node {
                Node::Leaf { start, end, .. } => {
                    for k in start..end {
                        let [a, b, c] = &self.triangles[k];
                        let q = closest_point_on_triangle(p, a, b, c);
                        let d2 = (p - q).norm_squared();
                        if d2 < best_d2 {
                            best_d2 = d2;
                            best = SurfaceHit {
                                point: q,
                                distance: 0.0,
                                face: self.face_ids[k],
                            };
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    let dl = self.nodes[left].bounds().distance_squared(p);
                    let dr = self.nodes[right].bounds().distance_squared(p);
                    // visit the nearer child first
                    if dl < dr {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        best.distance = best_d2.sqrt();
        best
    }

    pub fn udf(&self, p: &Vector3<f64>) -> UdfSample {
        let hit = self.closest(p);
        let diff = p - hit.point;
        if hit.distance > 0.0 {
            UdfSample {
                distance: hit.distance,
                gradient: diff / hit.distance,
                closest: hit.point,
                on_surface: false,
            }
        } else {
            UdfSample {
                distance: 0.0,
                gradient: Vector3::zeros(),
                closest: hit.point,
                on_surface: true,
            }
        }
    }
}

fn build(
    triangles: &[[Vector3<f64>; 3]],
    centroids: &[Vector3<f64>],
    ids: &mut [usize],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let mut bounds = Aabb::empty();
    for &f in &ids[start..end] {
        for v in &triangles[f] {
            bounds.grow(v);
        }
    }
    let me = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { bounds, start, end });
        return me;
    }
    let mut cb = Aabb::empty();
    for &f in &ids[start..end] {
        cb.grow(&centroids[f]);
    }
    let axis = (cb.max - cb.min).imax();
    let mid = (start + end) / 2;
    ids[start..end].select_nth_unstable_by(mid - start, |&a, &b| centroids[a][axis].total_cmp(&centroids[b][axis]));
    nodes.push(Node::Leaf { bounds, start, end });
    let left = build(triangles, centroids, ids, start, mid, nodes);
    let right = build(triangles, centroids, ids, mid, end, nodes);
    let merged = nodes[left].bounds().merge(nodes[right].bounds());
    nodes[me] = Node::Inner {
        bounds: merged,
        left,
        right,
    };
    me
}

/// Minimum point-triangle distance by exhaustive search.
pub fn brute_force_distance(mesh: &TriangleMesh, p: &Vector3<f64>) -> f64 {
    (0..mesh.faces().len())
        .map(|f| {
            let [a, b, c] = mesh.triangle(f);
            (p - closest_point_on_triangle(p, &a, &b, &c)).norm()
        })
        .fold(f64::INFINITY, f64::min)
}
