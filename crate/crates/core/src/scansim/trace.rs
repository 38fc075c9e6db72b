//! Ray casting against the glass stack, its edge and the background plane.
//! Everything here works in the glass model frame.

use super::{fresnel_reflectance, Candidate, HitClass, RayReturn, ScannerSpec};
use crate::geom::{closest_on_segment, Vec3};
use crate::model::{EdgeFrame, GlassModel, GroundPlane, MaterialOptics};

/// Parametric slack on primitive boundaries so a ray through a shared
/// vertex or the top of the bevel is not lost to rounding.
const BOUNDARY_TOL: f64 = 1e-12;
/// Hits closer than this to the border polyline belong to the edge.
const EDGE_TIE: f64 = 1e-9;
const MIN_T: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
struct Tri {
    a: Vec3,
    e1: Vec3,
    e2: Vec3,
    normal: Vec3,
}

impl Tri {
    fn new(a: Vec3, b: Vec3, c: Vec3, up: &Vec3) -> Option<Self> {
        let n = (b - a).cross(&(c - a));
        let len = n.norm();
        if len == 0.0 {
            return None;
        }
        let n = n / len;
        Some(Self {
            a,
            e1: b - a,
            e2: c - a,
            normal: if n.dot(up) < 0.0 { -n } else { n },
        })
    }

    fn offset(&self, d: f64) -> Self {
        Self {
            a: self.a - self.normal * d,
            ..*self
        }
    }

    /// Möller–Trumbore, two-sided.
    fn intersect(&self, o: &Vec3, d: &Vec3) -> Option<f64> {
        let p = d.cross(&self.e2);
        let det = self.e1.dot(&p);
        if det.abs() < 1e-18 {
            return None;
        }
        let inv = 1.0 / det;
        let s = o - self.a;
        let u = s.dot(&p) * inv;
        if !(-BOUNDARY_TOL..=1.0 + BOUNDARY_TOL).contains(&u) {
            return None;
        }
        let q = s.cross(&self.e1);
        let v = d.dot(&q) * inv;
        if v < -BOUNDARY_TOL || u + v > 1.0 + BOUNDARY_TOL {
            return None;
        }
        let t = self.e2.dot(&q) * inv;
        (t > MIN_T).then_some(t)
    }
}

/// Glass geometry prepared for repeated ray casts, optionally culled to the
/// slab around one laser plane.
pub(crate) struct Tracer {
    top: Vec<Tri>,
    edges: Vec<EdgeFrame>,
    bevel: f64,
    thickness: f64,
    material: MaterialOptics,
    ground: GroundPlane,
    ground_albedo: f64,
}

#[derive(Debug, Clone, Copy)]
enum Event {
    Top { t: f64, normal: Vec3 },
    Edge { t: f64, normal: Vec3 },
    Ground { t: f64 },
}

impl Tracer {
    /// `ground` is given in the model frame. With `plane = Some((p, n))`
    /// only primitives that can reach that plane are kept.
    pub(crate) fn new(
        glass: &GlassModel,
        ground: GroundPlane,
        ground_albedo: f64,
        plane: Option<(Vec3, Vec3)>,
    ) -> Self {
        let margin = glass.thickness() + glass.edge_bevel_radius() + 1e-9;
        let keep = |pts: &[Vec3]| match plane {
            None => true,
            Some((p, n)) => {
                let d: Vec<f64> = pts.iter().map(|q| (q - p).dot(&n)).collect();
                !(d.iter().all(|&v| v > margin) || d.iter().all(|&v| v < -margin))
            }
        };
        let up = glass.winding_normal();
        let top = glass
            .surface()
            .triangles()
            .filter(|t| keep(t))
            .filter_map(|[a, b, c]| Tri::new(a, b, c, &up))
            .collect();
        let edges = glass
            .edge_frames()
            .into_iter()
            .filter(|f| keep(&[f.start, f.end]))
            .collect();
        Self {
            top,
            edges,
            bevel: glass.edge_bevel_radius(),
            thickness: glass.thickness(),
            material: *glass.material(),
            ground,
            ground_albedo,
        }
    }

    fn near_border(&self, q: &Vec3) -> bool {
        self.edges
            .iter()
            .any(|f| (closest_on_segment(&f.start, &f.end, q).0 - q).norm() <= EDGE_TIE)
    }

    fn first_top(&self, o: &Vec3, d: &Vec3) -> Option<(f64, Vec3)> {
        let mut best: Option<(f64, Vec3)> = None;
        for tri in &self.top {
            if d.dot(&tri.normal) >= 0.0 {
                continue;
            }
            if let Some(t) = tri.intersect(o, d) {
                if best.is_none_or(|(bt, _)| t < bt) {
                    best = Some((t, tri.normal));
                }
            }
        }
        best.filter(|(t, _)| !self.near_border(&(o + d * *t)))
    }

    /// First exit through the rear face after `after`, seen from inside.
    fn rear(&self, o: &Vec3, d: &Vec3, after: f64) -> Option<(f64, Vec3)> {
        let mut best: Option<(f64, Vec3)> = None;
        for tri in &self.top {
            if d.dot(&tri.normal) >= 0.0 {
                continue;
            }
            if let Some(t) = tri.offset(self.thickness).intersect(o, d) {
                if t > after && best.is_none_or(|(bt, _)| t < bt) {
                    best = Some((t, tri.normal));
                }
            }
        }
        best
    }

    fn first_edge(&self, o: &Vec3, d: &Vec3) -> Option<(f64, Vec3)> {
        let mut best: Option<(f64, Vec3)> = None;
        for f in &self.edges {
            if let Some(hit) = edge_hit(f, self.bevel, self.thickness, o, d) {
                if best.is_none_or(|(bt, _)| hit.0 < bt) {
                    best = Some(hit);
                }
            }
        }
        best
    }

    fn ground_hit(&self, o: &Vec3, d: &Vec3) -> Option<f64> {
        let denom = d.dot(&self.ground.normal);
        if denom >= 0.0 {
            return None;
        }
        let t = (self.ground.point - o).dot(&self.ground.normal) / denom;
        (t > MIN_T).then_some(t)
    }

    /// Candidate returns of one ray, in order of range.
    pub(crate) fn cast(&self, o: &Vec3, d: &Vec3, receiver: &Vec3, spec: &ScannerSpec) -> RayReturn {
        let mut events = Vec::with_capacity(3);
        if let Some((t, normal)) = self.first_top(o, d) {
            events.push(Event::Top { t, normal });
        }
        if let Some((t, normal)) = self.first_edge(o, d) {
            events.push(Event::Edge { t, normal });
        }
        if let Some(t) = self.ground_hit(o, d) {
            events.push(Event::Ground { t });
        }
        events.sort_by(|a, b| event_t(a).total_cmp(&event_t(b)));

        let n_glass = self.material.refractive_index;
        let mut out = Vec::new();
        // One-way transmission accumulated so far; the return path pays it
        // again.
        let mut trans = 1.0;
        let mut skip_until = 0.0;
        for ev in events {
            if event_t(&ev) <= skip_until {
                continue;
            }
            match ev {
                Event::Top { t, normal } => {
                    let q = o + d * t;
                    let cos_i = -d.dot(&normal);
                    let r = fresnel_reflectance(n_glass, cos_i.acos());
                    let albedo = self.material.surface_diffuse_albedo;
                    push_surface(
                        &mut out,
                        spec,
                        d,
                        &q,
                        &normal,
                        receiver,
                        t,
                        albedo,
                        r,
                        trans,
                        HitClass::Surface,
                    );
                    if !self.material.transmissive {
                        break;
                    }
                    trans *= 1.0 - r;
                    if let Some((tb, nb)) = self.rear(o, d, t) {
                        let qb = o + d * tb;
                        let cos_b = -d.dot(&nb);
                        let rb = fresnel_reflectance(n_glass, cos_b.acos());
                        push_surface(
                            &mut out,
                            spec,
                            d,
                            &qb,
                            &nb,
                            receiver,
                            tb,
                            albedo,
                            rb,
                            trans,
                            HitClass::Surface,
                        );
                        trans *= 1.0 - rb;
                        skip_until = tb;
                    }
                }
                Event::Edge { t, normal } => {
                    let q = o + d * t;
                    let cos_i = -d.dot(&normal);
                    let r = fresnel_reflectance(n_glass, cos_i.acos());
                    let albedo = self.material.edge_diffuse_albedo;
                    push_surface(
                        &mut out,
                        spec,
                        d,
                        &q,
                        &normal,
                        receiver,
                        t,
                        albedo,
                        r,
                        trans,
                        HitClass::Edge,
                    );
                    break;
                }
                Event::Ground { t } => {
                    let q = o + d * t;
                    let normal = self.ground.normal;
                    if normal.dot(&(receiver - q)) > 0.0 {
                        let cos_i = -d.dot(&normal);
                        out.push(Candidate {
                            range: t,
                            intensity: (spec.exposure_gain * self.ground_albedo * cos_i * trans * trans)
                                .clamp(0.0, 1.0),
                            class: HitClass::Background,
                            specular: false,
                        });
                    }
                    break;
                }
            }
        }
        out.retain(|c| c.range <= spec.max_range);
        out
    }
}

fn event_t(e: &Event) -> f64 {
    match e {
        Event::Top { t, .. } | Event::Edge { t, .. } | Event::Ground { t } => *t,
    }
}

/// Diffuse (and, inside the receiver cone, specular) candidates of a
/// dielectric interface with reflectance `r`.
#[allow(clippy::too_many_arguments)]
fn push_surface(
    out: &mut RayReturn,
    spec: &ScannerSpec,
    d: &Vec3,
    q: &Vec3,
    normal: &Vec3,
    receiver: &Vec3,
    t: f64,
    albedo: f64,
    r: f64,
    trans: f64,
    class: HitClass,
) {
    let to_rx = receiver - q;
    let dist = to_rx.norm();
    if dist == 0.0 || normal.dot(&to_rx) <= 0.0 {
        return;
    }
    let to_rx = to_rx / dist;
    let cos_i = -d.dot(normal);
    let gain = spec.exposure_gain * trans * trans;
    out.push(Candidate {
        range: t,
        intensity: (gain * albedo * (1.0 - r) * cos_i).clamp(0.0, 1.0),
        class,
        specular: false,
    });
    let mirror = d - normal * (2.0 * d.dot(normal));
    let a = spec.receiver_acceptance_half_angle;
    if mirror.dot(&to_rx).clamp(-1.0, 1.0).acos() <= a {
        out.push(Candidate {
            range: t,
            intensity: (gain * r / (a * a)).min(1.0),
            class,
            specular: true,
        });
    }
}

/// Front-facing hit on the rounded bevel or the side face of one border
/// segment, with the outward surface normal there.
fn edge_hit(f: &EdgeFrame, bevel: f64, thickness: f64, o: &Vec3, d: &Vec3) -> Option<(f64, Vec3)> {
    let w = o - f.start;
    let (os, ou, ov) = (w.dot(&f.tangent), w.dot(&f.outward), w.dot(&f.up));
    let (ds, du, dv) = (d.dot(&f.tangent), d.dot(&f.outward), d.dot(&f.up));
    let along_ok = |t: f64| {
        let s = os + ds * t;
        (-BOUNDARY_TOL..=f.length + BOUNDARY_TOL).contains(&s)
    };
    let mut best: Option<(f64, Vec3)> = None;

    if bevel > 0.0 {
        // Quarter circle centred at (u, v) = (0, -bevel) in the section plane.
        let cv = ov + bevel;
        let a = du * du + dv * dv;
        let b = 2.0 * (ou * du + cv * dv);
        let c = ou * ou + cv * cv - bevel * bevel;
        let disc = b * b - 4.0 * a * c;
        if a > 0.0 && disc >= 0.0 {
            let t = (-b - disc.sqrt()) / (2.0 * a);
            let u = ou + du * t;
            let v = cv + dv * t;
            let tol = BOUNDARY_TOL * bevel.max(1.0);
            if t > MIN_T && u >= -tol && v >= -tol && along_ok(t) {
                let normal = (f.outward * u + f.up * v) / bevel;
                if normal.dot(d) < 0.0 {
                    best = Some((t, normal));
                }
            }
        }
    }

    if du < 0.0 {
        let t = (bevel - ou) / du;
        let v = ov + dv * t;
        let in_face = v <= -bevel + BOUNDARY_TOL && v >= -thickness - BOUNDARY_TOL;
        if t > MIN_T && in_face && along_ok(t) && best.is_none_or(|(bt, _)| t < bt) {
            best = Some((t, f.outward));
        }
    }
    best
}
