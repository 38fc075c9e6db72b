//! Scan planning, pose estimation, contour paths and the two validation
//! experiments.

mod experiments;

pub use experiments::{
    run_experiment_1, run_experiment_2, run_experiment_2_trials, write_point_errors, Exp1Report, Exp1Run, Exp2Params,
    Exp2Report, Exp2Run, Harness, PointError, DEFAULT_IK_SEED,
};

use std::time::Instant;

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bip::{bips_from_profiles, scan_all, BipError, BipSet};
use crate::geom::{RigidTransform, Vec3};
use crate::icp::{icp_register, IcpError, IcpParams, IcpResult};
use crate::kinematics::KinematicsError;
use crate::model::{GlassModel, ModelError};
use crate::scansim::{ScanError, ScannerSpec, Scene};

/// Environment variable capping worker threads; `0` runs sequentially.
pub const THREADS_ENV: &str = "EDGESCAN_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Scan(#[from] ScanError),
    #[error(transparent)]
    Bip(#[from] BipError),
    #[error(transparent)]
    Icp(#[from] IcpError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// Thread cap from the environment, if set and parseable.
pub fn thread_limit() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok()
}

/// Runs `f` inside a pool sized by the thread cap, or on the global pool.
pub fn install<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    match thread_limit() {
        Some(n) if n > 0 => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        _ => f(),
    }
}

/// Order-preserving map that honours the thread cap.
pub fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(usize, &T) -> R + Sync + Send) -> Vec<R> {
    if thread_limit() == Some(0) {
        return items.iter().enumerate().map(|(i, x)| f(i, x)).collect();
    }
    install(|| items.par_iter().enumerate().map(|(i, x)| f(i, x)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanPlan {
    pub poses: Vec<RigidTransform>,
    pub arc_positions: Vec<f64>,
    /// Angle between optical axis and local surface normal, radians.
    pub incidence_angle: f64,
    pub n: usize,
}

/// Scanner pose aimed at arc length `s` of an already posed border from
/// outside the glass. The laser plane is transverse to the border, the
/// optical axis is tilted `incidence` from the surface normal towards the
/// outside, and `lateral_shift` slides the scanner along its fan direction.
pub fn scan_pose_at(posed: &GlassModel, s: f64, incidence: f64, standoff: f64, lateral_shift: f64) -> RigidTransform {
    let (seg, _) = posed.locate(s);
    let frame = posed.edge_frames()[seg];
    let p = posed.edge_point_at(s);
    let view = frame.up * incidence.cos() + frame.outward * incidence.sin();
    let z = -view;
    let y = frame.tangent;
    let x = y.cross(&z);
    RigidTransform::new(
        Matrix3::from_columns(&[x, y, z]),
        p + view * standoff + x * lateral_shift,
    )
}

/// `n` scanner poses spaced uniformly by arc length along the border placed
/// at `coarse_pose`, at arc positions `(k + 1/2) P / n`.
pub fn generate_scan_poses(
    model: &GlassModel,
    coarse_pose: &RigidTransform,
    n: usize,
    incidence: f64,
    standoff: f64,
) -> ScanPlan {
    let posed = model.transformed(coarse_pose);
    let p = posed.perimeter();
    let arc_positions: Vec<f64> = (0..n).map(|k| (k as f64 + 0.5) * p / n as f64).collect();
    let poses = arc_positions
        .iter()
        .map(|&s| scan_pose_at(&posed, s, incidence, standoff, 0.0))
        .collect();
    ScanPlan {
        poses,
        arc_positions,
        incidence_angle: incidence,
        n,
    }
}

/// Result of scanning and registering once.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseEstimate {
    pub icp: IcpResult,
    pub bips: BipSet,
    /// Converged, RMS within `TRUSTED_RMS`, and the correction applied to
    /// the coarse pose stays inside the convergence basin.
    pub trusted: bool,
    pub scanning_s: f64,
    pub pose_estimation_s: f64,
}

/// Registrations whose RMS exceeds this are not trusted, metres.
pub const TRUSTED_RMS: f64 = 0.002;
/// Largest centroid shift and rotation ICP may apply to the coarse pose
/// before the result is considered outside the convergence basin.
pub const BASIN_TRANSLATION: f64 = 0.025;
pub const BASIN_ROTATION_DEG: f64 = 6.0;

/// Whether `estimate` lies within the convergence basin around `coarse`.
pub fn within_basin(model: &GlassModel, coarse: &RigidTransform, estimate: &RigidTransform) -> bool {
    let c = model.border_centroid();
    let shift = (estimate.apply(&c) - coarse.apply(&c)).norm();
    shift <= BASIN_TRANSLATION && coarse.angle_to(estimate) <= BASIN_ROTATION_DEG.to_radians()
}

/// Scans every plan pose, extracts BIPs and registers them against the
/// model sampled every `model_spacing` metres, starting from `coarse_pose`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_pose(
    scene: &Scene,
    plan: &ScanPlan,
    model: &GlassModel,
    coarse_pose: &RigidTransform,
    spec: &ScannerSpec,
    params: &IcpParams,
    model_spacing: f64,
    seed: u64,
) -> Result<PoseEstimate, PipelineError> {
    if !(model_spacing > 0.0) {
        return Err(PipelineError::InvalidParams("model_spacing must be > 0".into()));
    }
    let t0 = Instant::now();
    let profiles = scan_all(scene, &plan.poses, spec, seed);
    let scanning_s = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let bips = bips_from_profiles(&profiles, &scene.ground, spec);
    if bips.bips.len() < 3 {
        return Err(BipError::InsufficientPoints { got: bips.bips.len() }.into());
    }
    let dense = model.sample_border(model_spacing);
    let icp = icp_register(&bips.cloud(), &dense, coarse_pose, params)?;
    let pose_estimation_s = t1.elapsed().as_secs_f64();
    Ok(PoseEstimate {
        trusted: icp.converged && icp.rms <= TRUSTED_RMS && within_basin(model, coarse_pose, &icp.model_to_base),
        icp,
        bips,
        scanning_s,
        pose_estimation_s,
    })
}

/// Closest point of the border polyline of `estimated` to `p`.
pub fn nearest_on_model(estimated: &GlassModel, p: &Vec3) -> Vec3 {
    estimated.nearest_on_border(p).0
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub poses: Vec<RigidTransform>,
    pub spacing: f64,
}

impl Trajectory {
    /// Length of the closed tooltip path.
    pub fn length(&self) -> f64 {
        let n = self.poses.len();
        (0..n)
            .map(|i| (self.poses[(i + 1) % n].translation - self.poses[i].translation).norm())
            .sum()
    }
}

/// Tooltip poses every `spacing` (or closer) along the border, all with the
/// rotation of `r_approach`, in arc-length order.
pub fn plan_contour_path(estimated: &GlassModel, r_approach: &RigidTransform, spacing: f64) -> Trajectory {
    assert!(spacing > 0.0, "spacing must be positive");
    let p = estimated.perimeter();
    let k = ((p / spacing).ceil() as usize).max(1);
    let poses = (0..k)
        .map(|j| RigidTransform::new(r_approach.rotation, estimated.edge_point_at(p * j as f64 / k as f64)))
        .collect();
    Trajectory { poses, spacing }
}

/// Error summary in millimetres; `std` is the sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean_mm: f64,
    pub std_mm: f64,
    pub max_mm: f64,
    pub n: usize,
}

impl ErrorStats {
    pub fn from_mm(errors: &[f64]) -> Self {
        let n = errors.len();
        if n == 0 {
            return Self {
                mean_mm: 0.0,
                std_mm: 0.0,
                max_mm: 0.0,
                n,
            };
        }
        let mean = errors.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            mean_mm: mean,
            std_mm: var.sqrt(),
            max_mm: errors.iter().copied().fold(0.0, f64::max),
            n,
        }
    }

    pub fn from_metres(errors: &[f64]) -> Self {
        Self::from_mm(&errors.iter().map(|e| e * 1000.0).collect::<Vec<_>>())
    }
}

/// Per-stage durations in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TimingReport {
    pub scanning: f64,
    pub pose_estimation: f64,
    pub path_planning: f64,
    pub execution: f64,
}

impl TimingReport {
    pub fn mean(reports: &[TimingReport]) -> TimingReport {
        let n = reports.len().max(1) as f64;
        let sum = reports.iter().fold(TimingReport::default(), |a, r| TimingReport {
            scanning: a.scanning + r.scanning,
            pose_estimation: a.pose_estimation + r.pose_estimation,
            path_planning: a.path_planning + r.path_planning,
            execution: a.execution + r.execution,
        });
        TimingReport {
            scanning: sum.scanning / n,
            pose_estimation: sum.pose_estimation / n,
            path_planning: sum.path_planning / n,
            execution: sum.execution / n,
        }
    }
}
