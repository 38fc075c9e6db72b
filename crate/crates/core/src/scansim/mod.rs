//! Laser line scanner simulation: Fresnel optics at the glass, diffuse edge
//! and background returns, specular blooming, highest-intensity return
//! selection and range noise.

mod trace;

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::geom::{RigidTransform, Vec3};
use crate::model::{GlassModel, GroundPlane, ModelError};
use crate::seed;
use trace::Tracer;

#[derive(Debug, thiserror::Error)]
pub enum ScanError {
    #[error("laser plane does not intersect the glass border")]
    NoIntersection,
    #[error("invalid scanner spec: {0}")]
    InvalidSpec(String),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<ModelError> for ScanError {
    fn from(e: ModelError) -> Self {
        ScanError::InvalidScene(e.to_string())
    }
}

/// Unpolarized Fresnel reflectance for light arriving from air at incidence
/// `theta_i` on a medium of index `n`.
pub fn fresnel_reflectance(n: f64, theta_i: f64) -> f64 {
    let cos_i = theta_i.cos().clamp(0.0, 1.0);
    let sin_t = theta_i.sin() / n;
    let cos_t = (1.0 - sin_t * sin_t).max(0.0).sqrt();
    let rs = (cos_i - n * cos_t) / (cos_i + n * cos_t);
    let rp = (cos_t - n * cos_i) / (cos_t + n * cos_i);
    0.5 * (rs * rs + rp * rp)
}

/// Unpolarized Fresnel transmittance, computed from the transmission
/// coefficients rather than as `1 - R`.
pub fn fresnel_transmittance(n: f64, theta_i: f64) -> f64 {
    let cos_i = theta_i.cos().clamp(0.0, 1.0);
    let sin_t = theta_i.sin() / n;
    let cos_t = (1.0 - sin_t * sin_t).max(0.0).sqrt();
    let k = 4.0 * n * cos_i * cos_t;
    let ts = k / (cos_i + n * cos_t).powi(2);
    let tp = k / (cos_t + n * cos_i).powi(2);
    0.5 * (ts + tp)
}

/// Specular return of a parallel plate at normal incidence: the front
/// reflection plus the rear reflection seen through two transmissions.
pub fn two_surface_reflectance(n: f64) -> f64 {
    let r = fresnel_reflectance(n, 0.0);
    r + (1.0 - r) * (1.0 - r) * r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScannerSpec {
    /// Full fan angle of the laser line, radians.
    pub line_fov: f64,
    pub rays_per_profile: usize,
    /// Triangulation angle between laser and receiver, radians.
    pub receiver_offset_angle: f64,
    pub receiver_acceptance_half_angle: f64,
    pub min_intensity_threshold: f64,
    pub saturation_threshold: f64,
    /// Metres, along the ray.
    pub range_noise_sigma: f64,
    pub exposure_gain: f64,
    /// Distance from the scanner to the point its optical axis is aimed at.
    pub standoff: f64,
    pub max_range: f64,
}

impl Default for ScannerSpec {
    fn default() -> Self {
        Self {
            line_fov: 0.4,
            rays_per_profile: 641,
            receiver_offset_angle: 20f64.to_radians(),
            receiver_acceptance_half_angle: 1.5f64.to_radians(),
            min_intensity_threshold: 0.1,
            saturation_threshold: 0.95,
            range_noise_sigma: 0.0001,
            exposure_gain: 1.0,
            standoff: 0.2,
            max_range: 1.5,
        }
    }
}

impl ScannerSpec {
    pub fn validate(&self) -> Result<(), ScanError> {
        let bad = |m: &str| Err(ScanError::InvalidSpec(m.to_string()));
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        if self.rays_per_profile < 2 {
            return bad("rays_per_profile must be at least 2");
        }
        if !unit(self.min_intensity_threshold) || !unit(self.saturation_threshold) {
            return bad("thresholds must lie in (0, 1]");
        }
        if !(self.range_noise_sigma >= 0.0) {
            return bad("range_noise_sigma must be >= 0");
        }
        if !(self.line_fov > 0.0 && self.line_fov < std::f64::consts::PI) {
            return bad("line_fov must lie in (0, pi)");
        }
        if !(self.receiver_acceptance_half_angle > 0.0) || !(self.exposure_gain > 0.0) {
            return bad("acceptance angle and gain must be positive");
        }
        if !(self.standoff > 0.0) || !(self.max_range > 0.0) {
            return bad("standoff and max_range must be positive");
        }
        if !(self.receiver_offset_angle.abs() < std::f64::consts::FRAC_PI_2) {
            return bad("receiver_offset_angle must lie in (-pi/2, pi/2)");
        }
        Ok(())
    }

    /// Fan angle of ray `j`, measured from the optical axis towards +x.
    pub fn ray_angle(&self, j: usize) -> f64 {
        -0.5 * self.line_fov + self.line_fov * j as f64 / (self.rays_per_profile - 1) as f64
    }

    /// Receiver position in the scanner frame.
    pub fn receiver_offset(&self) -> Vec3 {
        Vec3::new(0.0, self.standoff * self.receiver_offset_angle.tan(), 0.0)
    }
}

/// Glass at its true pose above an opaque background plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub glass: GlassModel,
    /// Model frame to base frame.
    pub pose: RigidTransform,
    pub ground: GroundPlane,
    pub ground_albedo: f64,
    pub background_distance: f64,
}

impl Scene {
    /// Places the background `background_distance` below the glass origin
    /// along the glass's up direction.
    pub fn new(
        glass: GlassModel,
        pose: RigidTransform,
        background_distance: f64,
        ground_albedo: f64,
    ) -> Result<Self, ScanError> {
        if !pose.is_valid() {
            return Err(ScanError::InvalidScene("glass pose is not a rigid transform".into()));
        }
        if !(background_distance > 0.0) {
            return Err(ScanError::InvalidScene("background_distance must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&ground_albedo) {
            return Err(ScanError::InvalidScene("ground albedo must lie in [0, 1]".into()));
        }
        let up = pose.apply_vector(&glass.winding_normal());
        let ground = GroundPlane::new(pose.translation - up * background_distance, up)?;
        Ok(Self {
            glass,
            pose,
            ground,
            ground_albedo,
            background_distance,
        })
    }

    pub fn with_glass(&self, glass: GlassModel) -> Self {
        Self { glass, ..self.clone() }
    }

    /// The glass transported to its true pose.
    pub fn posed_glass(&self) -> GlassModel {
        self.glass.transformed(&self.pose)
    }

    fn tracer(&self, plane: Option<(Vec3, Vec3)>) -> Tracer {
        let inv = self.pose.invert();
        let ground = GroundPlane {
            point: inv.apply(&self.ground.point),
            normal: inv.apply_vector(&self.ground.normal),
        };
        let plane = plane.map(|(p, n)| (inv.apply(&p), inv.apply_vector(&n)));
        Tracer::new(&self.glass, ground, self.ground_albedo, plane)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HitClass {
    Surface,
    Edge,
    Background,
}

impl HitClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            HitClass::Surface => "surface",
            HitClass::Edge => "edge",
            HitClass::Background => "background",
        }
    }
}

/// One physical return path of a ray. `range` is the distance along the
/// ray in metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub range: f64,
    pub intensity: f64,
    pub class: HitClass,
    pub specular: bool,
}

pub type RayReturn = Vec<Candidate>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
}

/// Candidate returns of a single base-frame ray seen by a receiver at
/// `receiver`.
pub fn cast_ray(scene: &Scene, ray: &Ray, receiver: &Vec3, spec: &ScannerSpec) -> RayReturn {
    let inv = scene.pose.invert();
    let d = inv.apply_vector(&ray.direction).normalize();
    scene
        .tracer(None)
        .cast(&inv.apply(&ray.origin), &d, &inv.apply(receiver), spec)
}

/// The return a ray reports after selection and noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selected {
    /// Noisy distance along the ray.
    pub range: f64,
    pub intensity: f64,
    pub saturated: bool,
    pub class: HitClass,
}

/// Highest-intensity candidate above the detection threshold, with range
/// noise applied. Always draws two variates from `rng` so the stream stays
/// aligned across rays whatever the outcome.
pub fn select_return<R: Rng + ?Sized>(candidates: &[Candidate], spec: &ScannerSpec, rng: &mut R) -> Option<Selected> {
    let z: f64 = rng.sample(StandardNormal);
    let u: f64 = rng.random_range(-1.0..1.0);
    let best = candidates
        .iter()
        .filter(|c| c.intensity >= spec.min_intensity_threshold)
        .fold(None::<&Candidate>, |acc, c| match acc {
            Some(b) if b.intensity >= c.intensity => Some(b),
            _ => Some(c),
        })?;
    let saturated = best.specular && best.intensity >= spec.saturation_threshold;
    let sigma = spec.range_noise_sigma;
    let mut range = best.range + sigma * z;
    if saturated {
        range += 5.0 * sigma * u;
    }
    Some(Selected {
        range,
        intensity: best.intensity,
        saturated,
        class: best.class,
    })
}

/// One reading of the line sensor in scanner coordinates: `lateral` is
/// along the fan (scanner x), `range` along the optical axis (scanner z).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileRecord {
    pub ray: usize,
    pub lateral: f64,
    pub range: f64,
    pub intensity: f64,
    pub saturated: bool,
    pub class: HitClass,
}

impl ProfileRecord {
    pub fn scanner_point(&self) -> Vec3 {
        Vec3::new(self.lateral, 0.0, self.range)
    }
}

/// Rays without a return are absent; `rays_cast` counts all of them.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanProfile {
    pub records: Vec<ProfileRecord>,
    pub scan_pose: RigidTransform,
    pub rays_cast: usize,
}

impl ScanProfile {
    pub fn base_point(&self, r: &ProfileRecord) -> Vec3 {
        self.scan_pose.apply(&r.scanner_point())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "lateral_m,range_m,intensity,saturated,class")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.lateral,
                r.range,
                r.intensity,
                u8::from(r.saturated),
                r.class.as_str()
            )?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), ScanError> {
        let f = std::fs::File::create(path).map_err(|e| ScanError::Io(format!("{}: {e}", path.display())))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_csv(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| ScanError::Io(e.to_string()))
    }
}

/// Laser plane of a scanner pose as (point, unit normal), base frame.
pub fn laser_plane(scan_pose: &RigidTransform) -> (Vec3, Vec3) {
    (scan_pose.translation, scan_pose.rotation.column(1).into_owned())
}

/// Fans `rays_per_profile` rays across the laser plane and records the
/// selected return of each. Deterministic in `seed`.
pub fn simulate_profile(scene: &Scene, scan_pose: &RigidTransform, spec: &ScannerSpec, seed: u64) -> ScanProfile {
    let tracer = scene.tracer(Some(laser_plane(scan_pose)));
    let to_model = scene.pose.invert().compose(scan_pose);
    let origin = to_model.translation;
    let receiver = to_model.apply(&spec.receiver_offset());
    let mut rng = seed::rng(seed);
    let mut records = Vec::new();
    for j in 0..spec.rays_per_profile {
        let beta = spec.ray_angle(j);
        let local = Vec3::new(beta.sin(), 0.0, beta.cos());
        let d = to_model.apply_vector(&local);
        let candidates = tracer.cast(&origin, &d, &receiver, spec);
        if let Some(sel) = select_return(&candidates, spec, &mut rng) {
            let p = local * sel.range;
            records.push(ProfileRecord {
                ray: j,
                lateral: p.x,
                range: p.z,
                intensity: sel.intensity,
                saturated: sel.saturated,
                class: sel.class,
            });
        }
    }
    records.sort_by(|a, b| a.lateral.total_cmp(&b.lateral).then(a.ray.cmp(&b.ray)));
    ScanProfile {
        records,
        scan_pose: *scan_pose,
        rays_cast: spec.rays_per_profile,
    }
}

/// Intersection of the scanner's laser plane with the posed border
/// polyline, nearest to the scanner when there are several.
pub fn true_edge_point(scene: &Scene, scan_pose: &RigidTransform) -> Result<Vec3, ScanError> {
    let (p0, n) = laser_plane(scan_pose);
    let border = scene.posed_glass();
    let mut best: Option<(f64, Vec3)> = None;
    for i in 0..border.segment_count() {
        let (a, b) = border.segment(i);
        let (da, db) = ((a - p0).dot(&n), (b - p0).dot(&n));
        let q = if da == 0.0 {
            a
        } else if db == 0.0 {
            b
        } else if (da < 0.0) != (db < 0.0) {
            a + (b - a) * (da / (da - db))
        } else {
            continue;
        };
        let dist = (q - p0).norm();
        if best.is_none_or(|(bd, _)| dist < bd) {
            best = Some((dist, q));
        }
    }
    best.map(|(_, q)| q).ok_or(ScanError::NoIntersection)
}
