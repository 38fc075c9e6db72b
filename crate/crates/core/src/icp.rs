//! Point-to-point ICP of a sparse scan against a densely sampled border.

use serde::{Deserialize, Serialize};

use crate::geom::{best_fit_transform, closest_on_segment, off_line_spread, NnIndex, PointCloud, RigidTransform, Vec3};
use crate::model::GlassModel;

/// Scans whose points spread less than this off their best-fit line leave
/// the rotation about that line unconstrained.
pub const COLLINEAR_SPREAD: f64 = 1e-7;
/// Correspondences closer than this are never rejected, metres.
pub const REJECT_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IcpParams {
    pub max_iterations: usize,
    /// Stop once the RMS improves by less than this, metres.
    pub convergence_tol: f64,
    /// Correspondences farther than this multiple of the median distance are
    /// dropped.
    pub outlier_reject_factor: f64,
    pub min_points: usize,
    /// Rejection only runs with at least this many scan points.
    pub reject_min_scan: usize,
    /// Treat the model cloud as consecutive samples of a closed curve and
    /// match onto the polyline through them rather than onto samples.
    pub model_is_closed_polyline: bool,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            convergence_tol: 1e-7,
            outlier_reject_factor: 3.0,
            min_points: 3,
            reject_min_scan: 6,
            model_is_closed_polyline: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcpResult {
    /// Maps model coordinates into the base frame.
    #[serde(flatten)]
    pub model_to_base: RigidTransform,
    pub rms: f64,
    pub iterations: usize,
    pub converged: bool,
    pub degenerate: bool,
    /// RMS over accepted correspondences after each accepted iteration.
    pub rms_history: Vec<f64>,
    pub inliers: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum IcpError {
    #[error("need at least {need} scan points, got {got}")]
    InsufficientPoints { got: usize, need: usize },
    #[error("model has {model} points, fewer than the {scan} scan points")]
    ModelTooSparse { model: usize, scan: usize },
    #[error("scan points are collinear; pose is under-constrained")]
    DegenerateGeometry { partial: Box<IcpResult> },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

impl IcpParams {
    pub fn validate(&self) -> Result<(), IcpError> {
        if self.max_iterations < 1
            || !(self.convergence_tol > 0.0)
            || !(self.outlier_reject_factor > 0.0)
            || self.min_points < 3
        {
            return Err(IcpError::InvalidParams(format!("{self:?}")));
        }
        Ok(())
    }
}

struct Matcher<'a> {
    model: &'a [Vec3],
    index: NnIndex,
    polyline: bool,
}

impl Matcher<'_> {
    /// Closest model point to `q` (model frame).
    fn closest(&self, q: &Vec3) -> Vec3 {
        let nb = self.index.nearest(q).expect("model is non-empty");
        if !self.polyline || self.model.len() < 2 {
            return nb.point;
        }
        let n = self.model.len();
        let i = nb.index;
        let prev = self.model[(i + n - 1) % n];
        let next = self.model[(i + 1) % n];
        let (a, _) = closest_on_segment(&prev, &nb.point, q);
        let (b, _) = closest_on_segment(&nb.point, &next, q);
        let mut best = nb.point;
        for c in [a, b] {
            if (c - q).norm_squared() < (best - q).norm_squared() {
                best = c;
            }
        }
        best
    }
}

fn rms_of(t: &RigidTransform, src: &[Vec3], dst: &[Vec3]) -> f64 {
    let sum: f64 = src.iter().zip(dst).map(|(s, d)| (t.apply(s) - d).norm_squared()).sum();
    (sum / src.len() as f64).sqrt()
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Deactivates the largest residual if it exceeds the rejection limit.
fn drop_worst(t: &RigidTransform, m: &[Vec3], scan: &[Vec3], active: &mut [bool], params: &IcpParams) -> bool {
    let live: Vec<(usize, f64)> = (0..scan.len())
        .filter(|&k| active[k])
        .map(|k| (k, (t.apply(&m[k]) - scan[k]).norm()))
        .collect();
    if live.len() <= params.min_points {
        return false;
    }
    let mut d: Vec<f64> = live.iter().map(|&(_, d)| d).collect();
    let limit = (params.outlier_reject_factor * median(&mut d)).max(REJECT_FLOOR);
    let (worst, dist) = live
        .iter()
        .copied()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty");
    if dist <= limit {
        return false;
    }
    active[worst] = false;
    true
}

/// Registers `scan` (base frame) against `model` (model frame) starting
/// from `init`. The result maps the model into the base frame.
pub fn icp_register(
    scan: &PointCloud,
    model: &PointCloud,
    init: &RigidTransform,
    params: &IcpParams,
) -> Result<IcpResult, IcpError> {
    params.validate()?;
    let n = scan.len();
    if n < params.min_points {
        return Err(IcpError::InsufficientPoints {
            got: n,
            need: params.min_points,
        });
    }
    if model.len() < n {
        return Err(IcpError::ModelTooSparse {
            model: model.len(),
            scan: n,
        });
    }
    let matcher = Matcher {
        model: &model.points,
        index: NnIndex::new(model),
        polyline: params.model_is_closed_polyline,
    };

    let correspond = |t: &RigidTransform, prev: Option<&[Vec3]>| -> Vec<Vec3> {
        let inv = t.invert();
        scan.points
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let q = inv.apply(s);
                let c = matcher.closest(&q);
                // Never trade a correspondence for a worse one.
                match prev {
                    Some(p) if (p[k] - q).norm_squared() < (c - q).norm_squared() => p[k],
                    _ => c,
                }
            })
            .collect()
    };

    if off_line_spread(&scan.points) < COLLINEAR_SPREAD {
        let matches = correspond(init, None);
        let partial = IcpResult {
            model_to_base: *init,
            rms: rms_of(init, &matches, &scan.points),
            iterations: 0,
            converged: false,
            degenerate: true,
            rms_history: Vec::new(),
            inliers: n,
        };
        return Err(IcpError::DegenerateGeometry {
            partial: Box::new(partial),
        });
    }

    // Each time the fit settles, the worst correspondence is dropped if it
    // is an outlier relative to the median, and the fit runs again.
    let prune = n >= params.reject_min_scan;
    let mut active = vec![true; n];
    let mut t = *init;
    let mut matches: Option<Vec<Vec3>> = None;
    let mut prev_rms = f64::INFINITY;
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.max_iterations {
        let m = correspond(&t, matches.as_deref());
        let keep: Vec<usize> = (0..n).filter(|&k| active[k]).collect();
        let src: Vec<Vec3> = keep.iter().map(|&k| m[k]).collect();
        let dst: Vec<Vec3> = keep.iter().map(|&k| scan.points[k]).collect();
        let Ok(next) = best_fit_transform(&src, &dst) else {
            break;
        };
        let rms = rms_of(&next, &src, &dst);
        if rms > prev_rms {
            converged = true;
            break;
        }
        iterations += 1;
        t = next;
        history.push(rms);
        if prev_rms - rms < params.convergence_tol && !(prune && drop_worst(&t, &m, &scan.points, &mut active, params))
        {
            converged = true;
            break;
        }
        matches = Some(m);
        prev_rms = rms;
    }
    let inliers = active.iter().filter(|&&a| a).count();
    Ok(IcpResult {
        model_to_base: t,
        rms: history.last().copied().unwrap_or(f64::NAN),
        iterations,
        converged,
        degenerate: false,
        rms_history: history,
        inliers,
    })
}

/// The model carried into the base frame by `t`.
pub fn transform_model(model: &GlassModel, t: &RigidTransform) -> GlassModel {
    model.transformed(t)
}
