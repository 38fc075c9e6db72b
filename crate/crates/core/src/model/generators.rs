//! Synthetic glass models. Both generators centre the part on the model
//! origin with the top surface facing +z and the border wound
//! counter-clockwise seen from above.

use super::{GlassModel, MaterialOptics, ModelError, TriMesh};
use crate::geom::Vec3;

/// Longest polyline segment used to approximate a curved border arc.
pub const ARC_SEGMENT_MAX: f64 = 0.005;

const SURFACE_ROWS: usize = 4;

fn check_positive(name: &str, v: f64) -> Result<(), ModelError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ModelError::Validation(format!("{name} must be positive, got {v}")))
    }
}

/// Rectangular flat panel of `width` (x) by `height` (y).
pub fn make_flat_panel(width: f64, height: f64, thickness: f64, bevel: f64) -> Result<GlassModel, ModelError> {
    check_positive("width", width)?;
    check_positive("height", height)?;
    let (hw, hh) = (width / 2.0, height / 2.0);
    let border = vec![
        Vec3::new(-hw, -hh, 0.0),
        Vec3::new(hw, -hh, 0.0),
        Vec3::new(hw, hh, 0.0),
        Vec3::new(-hw, hh, 0.0),
    ];
    let surface = TriMesh {
        vertices: border.clone(),
        faces: vec![[0, 1, 2], [0, 2, 3]],
    };
    GlassModel::new(border, surface, bevel, thickness, MaterialOptics::default())
}

/// Cylindrically curved side glass. `chord` is the straight-line span of
/// the curved sides, `height` the straight extent along the cylinder axis
/// (model y). The axis sits at `(·, ·, -curvature_radius)`, so the crown of
/// the panel touches `z = 0`.
pub fn make_side_glass(
    chord: f64,
    height: f64,
    curvature_radius: f64,
    thickness: f64,
    bevel: f64,
) -> Result<GlassModel, ModelError> {
    check_positive("chord", chord)?;
    check_positive("height", height)?;
    if !(curvature_radius > chord / 2.0) {
        return Err(ModelError::Validation(format!(
            "curvature radius {curvature_radius} must exceed half the chord {}",
            chord / 2.0
        )));
    }
    let half_angle = (chord / (2.0 * curvature_radius)).asin();
    let arc_len = 2.0 * half_angle * curvature_radius;
    let segs = ((arc_len / ARC_SEGMENT_MAX).ceil() as usize).max(8);
    let on_cylinder = |phi: f64, y: f64| {
        let s = (phi / 2.0).sin();
        Vec3::new(curvature_radius * phi.sin(), y, -2.0 * curvature_radius * s * s)
    };
    let phi = |j: usize| -half_angle + 2.0 * half_angle * j as f64 / segs as f64;
    let hh = height / 2.0;

    let mut border = Vec::with_capacity(2 * segs + 2);
    for j in 0..=segs {
        border.push(on_cylinder(phi(j), -hh));
    }
    for j in (0..=segs).rev() {
        border.push(on_cylinder(phi(j), hh));
    }

    let cols = segs + 1;
    let mut vertices = Vec::with_capacity(cols * (SURFACE_ROWS + 1));
    for k in 0..=SURFACE_ROWS {
        let y = -hh + height * k as f64 / SURFACE_ROWS as f64;
        for j in 0..cols {
            vertices.push(on_cylinder(phi(j), y));
        }
    }
    let mut faces = Vec::with_capacity(2 * segs * SURFACE_ROWS);
    for k in 0..SURFACE_ROWS {
        for j in 0..segs {
            let a = k * cols + j;
            let b = a + 1;
            let c = b + cols;
            let d = a + cols;
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    GlassModel::new(
        border,
        TriMesh { vertices, faces },
        bevel,
        thickness,
        MaterialOptics::default(),
    )
}
