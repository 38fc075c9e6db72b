//! Glass object model: the closed border polyline (edge line), the top
//! surface mesh, edge bevel, thickness and optical material.

mod generators;
mod io;

pub use generators::{make_flat_panel, make_side_glass, ARC_SEGMENT_MAX};
pub use io::{load_glass_model, read_ply, save_glass_model, write_ply, Manifest};

use serde::{Deserialize, Serialize};

use crate::geom::{closest_on_segment, PointCloud, RigidTransform, Vec3};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("i/o error: {0}")]
    Io(String),
}

/// Optical parameters of the glass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialOptics {
    pub refractive_index: f64,
    pub surface_diffuse_albedo: f64,
    pub edge_diffuse_albedo: f64,
    /// When false the surface is treated as an opaque diffuse skin: no
    /// transmission, so nothing behind it is visible.
    #[serde(default = "default_true")]
    pub transmissive: bool,
}

fn default_true() -> bool {
    true
}

impl Default for MaterialOptics {
    fn default() -> Self {
        Self {
            refractive_index: 1.5,
            surface_diffuse_albedo: 0.01,
            edge_diffuse_albedo: 0.30,
            transmissive: true,
        }
    }
}

impl MaterialOptics {
    /// Opaque object with a bright diffuse edge, the reference profile of
    /// the point-localisation comparison.
    pub fn opaque_edge() -> Self {
        Self {
            edge_diffuse_albedo: 0.9,
            transmissive: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(self.refractive_index > 1.0) || !self.refractive_index.is_finite() {
            return Err(ModelError::Validation(format!(
                "refractive index must be > 1, got {}",
                self.refractive_index
            )));
        }
        if !in_unit(self.surface_diffuse_albedo) || !in_unit(self.edge_diffuse_albedo) {
            return Err(ModelError::Validation("albedos must lie in [0, 1]".into()));
        }
        if !(self.edge_diffuse_albedo > self.surface_diffuse_albedo) {
            return Err(ModelError::Validation("edge albedo must exceed surface albedo".into()));
        }
        Ok(())
    }
}

/// Support surface beneath the object; `normal` points up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundPlane {
    pub point: Vec3,
    pub normal: Vec3,
}

impl GroundPlane {
    pub fn new(point: Vec3, normal: Vec3) -> Result<Self, ModelError> {
        let n = normal.norm();
        if !(n > 0.0) || !n.is_finite() || !point.iter().all(|v| v.is_finite()) {
            return Err(ModelError::Validation("ground normal must be non-zero".into()));
        }
        Ok(Self {
            point,
            normal: normal / n,
        })
    }

    pub fn horizontal(height: f64) -> Self {
        Self {
            point: Vec3::new(0.0, 0.0, height),
            normal: Vec3::z(),
        }
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        (p - self.point).dot(&self.normal)
    }

    pub fn is_valid(&self) -> bool {
        (self.normal.norm() - 1.0).abs() <= 1e-12
    }
}

/// Indexed triangle mesh.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

impl TriMesh {
    pub fn triangles(&self) -> impl Iterator<Item = [Vec3; 3]> + '_ {
        self.faces
            .iter()
            .map(|f| [self.vertices[f[0]], self.vertices[f[1]], self.vertices[f[2]]])
    }

    pub fn transformed(&self, t: &RigidTransform) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(|v| t.apply(v)).collect(),
            faces: self.faces.clone(),
        }
    }
}

/// Local frame of one border segment: `tangent` along the border, `up`
/// the surface normal there, `outward` pointing away from the glass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeFrame {
    pub start: Vec3,
    pub end: Vec3,
    pub length: f64,
    pub tangent: Vec3,
    pub up: Vec3,
    pub outward: Vec3,
}

/// Validated glass model in its own (model) frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GlassModel {
    border: Vec<Vec3>,
    surface: TriMesh,
    edge_bevel_radius: f64,
    thickness: f64,
    material: MaterialOptics,
    cumulative: Vec<f64>,
}

impl GlassModel {
    /// Builds and validates a model. A closing vertex equal to the first is
    /// dropped; closure is always implicit afterwards.
    pub fn new(
        mut border: Vec<Vec3>,
        surface: TriMesh,
        edge_bevel_radius: f64,
        thickness: f64,
        material: MaterialOptics,
    ) -> Result<Self, ModelError> {
        if border.len() >= 2 && border.first() == border.last() {
            border.pop();
        }
        if border.len() < 3 {
            return Err(ModelError::Validation(format!(
                "border needs at least 3 vertices, got {}",
                border.len()
            )));
        }
        if border
            .iter()
            .chain(&surface.vertices)
            .any(|p| !p.iter().all(|v| v.is_finite()))
        {
            return Err(ModelError::Validation("non-finite vertex".into()));
        }
        if let Some(f) = surface
            .faces
            .iter()
            .find(|f| f.iter().any(|&i| i >= surface.vertices.len()))
        {
            return Err(ModelError::Validation(format!(
                "face {f:?} references a missing vertex"
            )));
        }
        if !(thickness > 0.0) || !thickness.is_finite() {
            return Err(ModelError::Validation(format!(
                "thickness must be > 0, got {thickness}"
            )));
        }
        if !(edge_bevel_radius >= 0.0) || !edge_bevel_radius.is_finite() {
            return Err(ModelError::Validation(format!(
                "bevel radius must be >= 0, got {edge_bevel_radius}"
            )));
        }
        material.validate()?;
        let mut cumulative = Vec::with_capacity(border.len() + 1);
        let mut acc = 0.0;
        cumulative.push(0.0);
        for i in 0..border.len() {
            acc += (border[(i + 1) % border.len()] - border[i]).norm();
            cumulative.push(acc);
        }
        if !(acc > 0.0) {
            return Err(ModelError::Validation("border has zero arc length".into()));
        }
        Ok(Self {
            border,
            surface,
            edge_bevel_radius,
            thickness,
            material,
            cumulative,
        })
    }

    pub fn border(&self) -> &[Vec3] {
        &self.border
    }

    pub fn surface(&self) -> &TriMesh {
        &self.surface
    }

    pub fn edge_bevel_radius(&self) -> f64 {
        self.edge_bevel_radius
    }

    pub fn thickness(&self) -> f64 {
        self.thickness
    }

    pub fn material(&self) -> &MaterialOptics {
        &self.material
    }

    pub fn with_material(&self, material: MaterialOptics) -> Result<Self, ModelError> {
        material.validate()?;
        Ok(Self {
            material,
            ..self.clone()
        })
    }

    pub fn with_bevel(&self, radius: f64) -> Result<Self, ModelError> {
        Self::new(
            self.border.clone(),
            self.surface.clone(),
            radius,
            self.thickness,
            self.material,
        )
    }

    pub fn perimeter(&self) -> f64 {
        *self.cumulative.last().expect("validated border")
    }

    pub fn border_centroid(&self) -> Vec3 {
        self.border.iter().sum::<Vec3>() / self.border.len() as f64
    }

    /// Segment `i` runs from vertex `i` to vertex `i + 1` (wrapping).
    pub fn segment(&self, i: usize) -> (Vec3, Vec3) {
        let n = self.border.len();
        (self.border[i % n], self.border[(i + 1) % n])
    }

    pub fn segment_count(&self) -> usize {
        self.border.len()
    }

    /// Point at arc length `s` along the border, wrapping modulo perimeter.
    pub fn edge_point_at(&self, s: f64) -> Vec3 {
        let (seg, t) = self.locate(s);
        let (a, b) = self.segment(seg);
        a + (b - a) * t
    }

    /// Segment index and in-segment fraction of arc length `s`.
    pub fn locate(&self, s: f64) -> (usize, f64) {
        let p = self.perimeter();
        let s = s.rem_euclid(p);
        let n = self.border.len();
        // First cumulative entry strictly greater than s.
        let k = self.cumulative.partition_point(|&c| c <= s).clamp(1, n);
        let seg = k - 1;
        let len = self.cumulative[k] - self.cumulative[seg];
        let t = if len > 0.0 {
            (s - self.cumulative[seg]) / len
        } else {
            0.0
        };
        (seg, t.clamp(0.0, 1.0))
    }

    /// Arc length at the start of segment `i`.
    pub fn arc_length_at_vertex(&self, i: usize) -> f64 {
        self.cumulative[i % self.border.len()]
    }

    /// Samples the border so consecutive arc-length gaps are at most
    /// `spacing`. Every vertex is included, vertex 0 first.
    pub fn sample_border(&self, spacing: f64) -> PointCloud {
        assert!(spacing > 0.0, "spacing must be positive");
        let mut points = Vec::new();
        for i in 0..self.border.len() {
            let (a, b) = self.segment(i);
            let len = (b - a).norm();
            let k = ((len / spacing).ceil() as usize).max(1);
            for j in 0..k {
                points.push(a + (b - a) * (j as f64 / k as f64));
            }
        }
        PointCloud::new(points)
    }

    /// `n` points spaced uniformly by arc length, starting at `offset`.
    pub fn uniform_arc_points(&self, n: usize, offset: f64) -> Vec<(f64, Vec3)> {
        let p = self.perimeter();
        (0..n)
            .map(|k| {
                let s = (offset + p * k as f64 / n as f64).rem_euclid(p);
                (s, self.edge_point_at(s))
            })
            .collect()
    }

    /// Closest point on the border polyline to `p`. Ties go to the lowest
    /// segment index.
    pub fn nearest_on_border(&self, p: &Vec3) -> (Vec3, usize) {
        let mut best = (self.border[0], 0usize, f64::INFINITY);
        for i in 0..self.border.len() {
            let (a, b) = self.segment(i);
            let (q, _) = closest_on_segment(&a, &b, p);
            let d2 = (q - p).norm_squared();
            if d2 < best.2 {
                best = (q, i, d2);
            }
        }
        (best.0, best.1)
    }

    /// Newell normal of the border loop; the border winds counter-clockwise
    /// about it.
    pub fn winding_normal(&self) -> Vec3 {
        let n = self.border.len();
        let c = self.border_centroid();
        let mut acc = Vec3::zeros();
        for i in 0..n {
            let a = self.border[i] - c;
            let b = self.border[(i + 1) % n] - c;
            acc += a.cross(&b);
        }
        let norm = acc.norm();
        if norm > 0.0 {
            acc / norm
        } else {
            Vec3::z()
        }
    }

    /// Surface normal of the triangle closest to `p`, oriented to agree with
    /// the winding normal. Falls back to the winding normal without a mesh.
    pub fn surface_normal_near(&self, p: &Vec3) -> Vec3 {
        let up = self.winding_normal();
        let mut best: Option<(f64, Vec3)> = None;
        for [a, b, c] in self.surface.triangles() {
            let n = (b - a).cross(&(c - a));
            let nn = n.norm();
            if nn == 0.0 {
                continue;
            }
            let d = (closest_on_triangle(p, &a, &b, &c) - p).norm_squared();
            if best.is_none_or(|(bd, _)| d < bd) {
                let n = n / nn;
                best = Some((d, if n.dot(&up) < 0.0 { -n } else { n }));
            }
        }
        best.map(|(_, n)| n).unwrap_or(up)
    }

    /// Local frame of every border segment.
    pub fn edge_frames(&self) -> Vec<EdgeFrame> {
        (0..self.border.len())
            .map(|i| {
                let (a, b) = self.segment(i);
                let length = (b - a).norm();
                let tangent = if length > 0.0 { (b - a) / length } else { Vec3::x() };
                let raw = self.surface_normal_near(&((a + b) * 0.5));
                let mut up = raw - tangent * raw.dot(&tangent);
                if up.norm() < 1e-12 {
                    up = self.winding_normal();
                }
                let up = up.normalize();
                EdgeFrame {
                    start: a,
                    end: b,
                    length,
                    tangent,
                    up,
                    outward: tangent.cross(&up),
                }
            })
            .collect()
    }

    /// Applies `t` to every border and surface vertex; optics unchanged.
    pub fn transformed(&self, t: &RigidTransform) -> GlassModel {
        GlassModel {
            border: self.border.iter().map(|p| t.apply(p)).collect(),
            surface: self.surface.transformed(t),
            ..self.clone()
        }
    }
}

/// Closest point on triangle `abc` to `p`.
pub fn closest_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
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
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}
