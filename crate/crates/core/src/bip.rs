//! Border Identifier Points: one filtered point per laser profile, the
//! highest unsaturated return above the ground plane.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geom::{PointCloud, RigidTransform, Vec3};
use crate::model::GroundPlane;
use crate::scansim::{simulate_profile, ScanProfile, ScannerSpec, Scene};
use crate::{pipeline, seed};

/// Heights closer than this tie; the lower ray index wins.
pub const HEIGHT_TIE: f64 = 1e-9;
/// Returns must clear the ground plane by this many noise sigmas.
pub const GROUND_CLEARANCE_SIGMAS: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BipError {
    #[error("profile has no returns")]
    EmptyProfile,
    #[error("no unsaturated return above the ground plane")]
    NoCandidate,
    #[error("only {got} border points survived, need at least 3")]
    InsufficientPoints { got: usize },
    #[error("bip file: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bip {
    /// Base frame, metres.
    pub point: Vec3,
    pub profile_index: usize,
    pub intensity: f64,
}

/// Highest unsaturated return of `profile`, measured along the ground
/// normal, that lies above the ground plane.
pub fn extract_bip(
    profile: &ScanProfile,
    profile_index: usize,
    ground: &GroundPlane,
    spec: &ScannerSpec,
) -> Result<Bip, BipError> {
    if profile.records.is_empty() {
        return Err(BipError::EmptyProfile);
    }
    let clearance = GROUND_CLEARANCE_SIGMAS * spec.range_noise_sigma;
    let mut best: Option<(f64, usize, Vec3, f64)> = None;
    for r in profile.records.iter().filter(|r| !r.saturated) {
        let p = profile.base_point(r);
        let h = ground.signed_distance(&p);
        if !(h > clearance) {
            continue;
        }
        let better = match best {
            None => true,
            Some((bh, bray, _, _)) => h > bh + HEIGHT_TIE || ((h - bh).abs() <= HEIGHT_TIE && r.ray < bray),
        };
        if better {
            best = Some((h, r.ray, p, r.intensity));
        }
    }
    best.map(|(_, _, point, intensity)| Bip {
        point,
        profile_index,
        intensity,
    })
    .ok_or(BipError::NoCandidate)
}

/// BIPs in pose order plus the poses that yielded none.
#[derive(Debug, Clone, PartialEq)]
pub struct BipSet {
    pub bips: Vec<Bip>,
    pub skipped: Vec<(usize, BipError)>,
}

impl BipSet {
    pub fn cloud(&self) -> PointCloud {
        PointCloud {
            points: self.bips.iter().map(|b| b.point).collect(),
            intensity: Some(self.bips.iter().map(|b| b.intensity).collect()),
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), BipError> {
        write_bips(&self.bips, w)
    }
}

/// One profile per pose; profile `i` uses the seed derived from
/// `master_seed` and `i`.
pub fn scan_all(scene: &Scene, poses: &[RigidTransform], spec: &ScannerSpec, master_seed: u64) -> Vec<ScanProfile> {
    pipeline::par_map(poses, |i, pose| {
        simulate_profile(scene, pose, spec, seed::derive(master_seed, i as u64))
    })
}

/// Extracts a BIP from every profile, recording failures instead of
/// aborting.
pub fn bips_from_profiles(profiles: &[ScanProfile], ground: &GroundPlane, spec: &ScannerSpec) -> BipSet {
    let mut set = BipSet {
        bips: Vec::new(),
        skipped: Vec::new(),
    };
    for (i, p) in profiles.iter().enumerate() {
        match extract_bip(p, i, ground, spec) {
            Ok(b) => set.bips.push(b),
            Err(e) => set.skipped.push((i, e)),
        }
    }
    set
}

pub fn collect_bips(
    scene: &Scene,
    poses: &[RigidTransform],
    spec: &ScannerSpec,
    master_seed: u64,
) -> Result<BipSet, BipError> {
    let profiles = scan_all(scene, poses, spec, master_seed);
    let set = bips_from_profiles(&profiles, &scene.ground, spec);
    if set.bips.len() < 3 {
        return Err(BipError::InsufficientPoints { got: set.bips.len() });
    }
    Ok(set)
}

#[derive(Serialize, Deserialize)]
struct BipRow {
    x: f64,
    y: f64,
    z: f64,
    profile_index: usize,
    intensity: f64,
}

/// CSV with header `x,y,z,profile_index,intensity`.
pub fn write_bips<W: Write>(bips: &[Bip], w: W) -> Result<(), BipError> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    for b in bips {
        wtr.serialize(BipRow {
            x: b.point.x,
            y: b.point.y,
            z: b.point.z,
            profile_index: b.profile_index,
            intensity: b.intensity,
        })
        .map_err(|e| BipError::Io(e.to_string()))?;
    }
    wtr.flush().map_err(|e| BipError::Io(e.to_string()))
}

pub fn read_bips<R: Read>(r: R) -> Result<Vec<Bip>, BipError> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers().map_err(|e| BipError::Io(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["x", "y", "z", "profile_index", "intensity"] {
        return Err(BipError::Io(format!("unexpected header {:?}", headers)));
    }
    rdr.deserialize::<BipRow>()
        .map(|row| {
            let row = row.map_err(|e| BipError::Io(e.to_string()))?;
            let point = Vec3::new(row.x, row.y, row.z);
            if !point.iter().all(|v| v.is_finite()) || !(row.intensity >= 0.0) {
                return Err(BipError::Io("non-finite coordinate or negative intensity".into()));
            }
            Ok(Bip {
                point,
                profile_index: row.profile_index,
                intensity: row.intensity,
            })
        })
        .collect()
}

pub fn load_bips(path: &Path) -> Result<Vec<Bip>, BipError> {
    let f = std::fs::File::open(path).map_err(|e| BipError::Io(format!("{}: {e}", path.display())))?;
    read_bips(f)
}

pub fn save_bips(bips: &[Bip], path: &Path) -> Result<(), BipError> {
    let f = std::fs::File::create(path).map_err(|e| BipError::Io(format!("{}: {e}", path.display())))?;
    write_bips(bips, std::io::BufWriter::new(f))
}
