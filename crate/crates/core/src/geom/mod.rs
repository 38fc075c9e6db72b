//! Vectors, rigid transforms, point clouds, nearest-neighbour search and
//! least-squares rigid fitting. All lengths are metres.

mod cloud;
mod fit;
mod nn;
mod transform;

pub use cloud::PointCloud;
pub use fit::{best_fit_transform, off_line_spread, sum_squared_residual, DEGENERATE_TOL};
pub use nn::{brute_force, Neighbor, NnIndex, BRUTE_FORCE_BELOW};
pub use transform::{
    log_so3, orthonormality_error, project_to_rotation, rotation_angle, RigidTransform, ORTHONORMAL_TOL,
};

pub type Vec3 = nalgebra::Vector3<f64>;

#[derive(Debug, thiserror::Error)]
pub enum GeomError {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("correspondence length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

/// Nearest point of `index` to `q` and its distance.
pub fn nearest(index: &NnIndex, q: &Vec3) -> Result<(Vec3, f64), GeomError> {
    index.nearest(q).map(|n| (n.point, n.distance))
}

/// Closest point on segment `[a, b]` to `p`, with its parameter in `[0, 1]`.
pub fn closest_on_segment(a: &Vec3, b: &Vec3, p: &Vec3) -> (Vec3, f64) {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (*a, 0.0);
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (a + ab * t, t)
}
