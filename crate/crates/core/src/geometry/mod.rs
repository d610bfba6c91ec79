//! Cameras, meshes, nearest-surface queries, silhouettes and point-set
//! metrics.

mod camera;
mod closest;
mod kdtree;
mod mesh;
mod metrics;
pub mod primitives;
mod raster;
mod sampling;

pub use camera::PerspectiveCamera;
pub use closest::{brute_force_distance, closest_point_on_triangle, ClosestPointQuery, SurfaceHit, UdfSample};
pub use kdtree::PointIndex;
pub use mesh::TriangleMesh;
pub use metrics::{chamfer_distance, chamfer_with_matches, procrustes_align, v2v, ChamferMatches, Similarity};
pub use raster::{
    distance_transform, occlusion_aware_silhouette_loss, render_silhouette, sample_bilinear, MaskSource, Rendering,
    SilhouetteMask,
};
pub use sampling::sample_surface;

use nalgebra::{Vector2, Vector3};

use crate::error::Result;

pub fn project_point(camera: &PerspectiveCamera, p: &Vector3<f64>) -> Result<Vector2<f64>> {
    camera.project(p)
}

/// Unsigned distance to the indexed surface and its gradient.
pub fn mesh_udf(query: &ClosestPointQuery, p: &Vector3<f64>) -> UdfSample {
    query.udf(p)
}
