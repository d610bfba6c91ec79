use nalgebra::Vector3;

/// Static 3D kd-tree for nearest-neighbor queries over a point set.
#[derive(Clone, Debug)]
pub struct PointIndex {
    points: Vec<Vector3<f64>>,
    /// Permutation of point indices laid out as an implicit balanced tree.
    order: Vec<usize>,
    axes: Vec<u8>,
}

impl PointIndex {
    pub fn new(points: &[Vector3<f64>]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut axes = vec![0u8; points.len()];
        build(points, &mut order, &mut axes, 0, points.len());
        Self {
            points: points.to_vec(),
            order,
            axes,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    /// Index and distance of the nearest stored point; ties resolve to the
    /// lowest index. `None` when the index is empty.
    pub fn nearest(&self, q: &Vector3<f64>) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(q, 0, self.points.len(), &mut best);
        Some((best.0, best.1.sqrt()))
    }

    fn search(&self, q: &Vector3<f64>, start: usize, end: usize, best: &mut (usize, f64)) {
        if start >= end {
            return;
        }
        let mid = (start + end) / 2;
        let idx = self.order[mid];
        let p = &self.points[idx];
        let d2 = (p - q).norm_squared();
        if d2 < best.1 || (d2 == best.1 && idx < best.0) {
            *best = (idx, d2);
        }
        let axis = self.axes[mid] as usize;
        let delta = q[axis] - p[axis];
        let (near, far) = if delta < 0.0 {
            ((start, mid), (mid + 1, end))
        } else {
            ((mid + 1, end), (start, mid))
        };
        self.search(q, near.0, near.1, best);
        if delta * delta <= best.1 {
            self.search(q, far.0, far.1, best);
        }
    }
}

fn build(points: &[Vector3<f64>], order: &mut [usize], axes: &mut [u8], start: usize, end: usize) {
    if end - start <= 1 {
        return;
    }
    let (mut lo, mut hi) = (Vector3::repeat(f64::INFINITY), Vector3::repeat(f64::NEG_INFINITY));
    for &i in &order[start..end] {
        lo = lo.inf(&points[i]);
        hi = hi.sup(&points[i]);
    }
    let axis = (hi - lo).imax();
    let mid = (start + end) / 2;
    order[start..end].select_nth_unstable_by(mid - start, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
    axes[mid] = axis as u8;
    build(points, order, axes, start, mid);
    build(points, order, axes, mid + 1, end);
}
