use nalgebra::{Matrix3, SymmetricEigen, SVD};

use super::{GeomError, RigidTransform, Vec3};

/// RMS spread below which a point set counts as collinear or coincident.
pub const DEGENERATE_TOL: f64 = 1e-9;

/// RMS distance of the points from their best-fit line. Zero for collinear
/// or coincident sets.
pub fn off_line_spread(points: &[Vec3]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let n = points.len() as f64;
    let c: Vec3 = points.iter().sum::<Vec3>() / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - c;
        cov += d * d.transpose();
    }
    let mut eig = SymmetricEigen::new(cov).eigenvalues;
    eig.as_mut_slice().sort_by(|a, b| b.total_cmp(a));
    // λ1 + λ2 is the summed squared distance to the principal line.
    ((eig[1] + eig[2]).max(0.0) / n).sqrt()
}

/// Least-squares rigid transform taking `src[i]` onto `dst[i]`.
///
/// Cross-covariance SVD with a determinant check so the result is always a
/// proper rotation. No scale is estimated.
pub fn best_fit_transform(src: &[Vec3], dst: &[Vec3]) -> Result<RigidTransform, GeomError> {
    if src.len() != dst.len() {
        return Err(GeomError::LengthMismatch(src.len(), dst.len()));
    }
    if src.len() < 3 {
        return Err(GeomError::DegenerateGeometry(format!(
            "need at least 3 correspondences, got {}",
            src.len()
        )));
    }
    if off_line_spread(src) < DEGENERATE_TOL {
        return Err(GeomError::DegenerateGeometry(
            "source points are collinear or coincident".into(),
        ));
    }
    let n = src.len() as f64;
    let cs: Vec3 = src.iter().sum::<Vec3>() / n;
    let cd: Vec3 = dst.iter().sum::<Vec3>() / n;
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s - cs) * (d - cd).transpose();
    }
    let svd = SVD::new(h, true, true);
    let u = svd.u.expect("svd u");
    let v = svd.v_t.expect("svd v_t").transpose();
    let mut r = v * u.transpose();
    if r.determinant() < 0.0 {
        // Flip the axis with the smallest singular value.
        let mut v = v;
        v.column_mut(2).neg_mut();
        r = v * u.transpose();
    }
    Ok(RigidTransform::new(r, cd - r * cs))
}

/// Sum of squared residuals `Σ |t(src_i) − dst_i|²`.
pub fn sum_squared_residual(t: &RigidTransform, src: &[Vec3], dst: &[Vec3]) -> f64 {
    src.iter().zip(dst).map(|(s, d)| (t.apply(s) - d).norm_squared()).sum()
}
