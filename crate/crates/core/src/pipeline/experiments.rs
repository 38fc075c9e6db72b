use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{
    estimate_pose, nearest_on_model, par_map, plan_contour_path, ErrorStats, PipelineError, ScanPlan, TimingReport,
};
use crate::bip::{extract_bip, scan_all};
use crate::geom::{RigidTransform, Vec3};
use crate::icp::{transform_model, IcpParams, IcpResult};
use crate::kinematics::{localisation_error, solve_ik, ArmModel, CalibrationSet, IkParams, JointState};
use crate::model::MaterialOptics;
use crate::scansim::{true_edge_point, ScannerSpec, Scene};
use crate::seed;

/// Generic starting configuration for the first IK solve: elbow up, wrist
/// pointing down.
pub const DEFAULT_IK_SEED: JointState = JointState([0.0, -1.9, 1.9, -1.571, -1.571, 0.0]);

/// Robot side of the experiments: the arm, its calibration and the fixed
/// tooltip orientation used for every touch.
#[derive(Debug, Clone)]
pub struct Harness {
    pub arm: ArmModel,
    pub cal: CalibrationSet,
    pub r_approach: RigidTransform,
    pub ik: IkParams,
    /// Configuration reaching the workspace centre; seeds every solve.
    pub home: JointState,
}

impl Harness {
    /// Solves for a home configuration with the tooltip at `workspace_centre`.
    pub fn new(
        arm: ArmModel,
        cal: CalibrationSet,
        r_approach: RigidTransform,
        ik: IkParams,
        workspace_centre: &Vec3,
    ) -> Result<Self, PipelineError> {
        let mut h = Self {
            arm,
            cal,
            r_approach: RigidTransform::from_rotation(r_approach.rotation),
            ik,
            home: DEFAULT_IK_SEED,
        };
        h.home = h.touch(workspace_centre, &DEFAULT_IK_SEED)?;
        Ok(h)
    }

    /// Joint configuration putting the tooltip at `p` with the approach
    /// orientation. Falls back to the home seed if `seed` fails.
    pub fn touch(&self, p: &Vec3, seed: &JointState) -> Result<JointState, PipelineError> {
        let target = RigidTransform::new(self.r_approach.rotation, *p);
        let tool = &self.cal.flange_to_tooltip;
        match solve_ik(&self.arm, tool, &target, seed, &self.ik) {
            Ok(s) => Ok(s.q),
            Err(e) if seed != &self.home => solve_ik(&self.arm, tool, &target, &self.home, &self.ik)
                .map(|s| s.q)
                .map_err(|_| e.into()),
            Err(e) => Err(e.into()),
        }
    }

    pub fn error(&self, a: &JointState, b: &JointState) -> f64 {
        localisation_error(&self.arm, a, b, &self.cal)
    }
}

/// One measured point: where the tooltip was sent, where it should have
/// gone, and the tooltip distance between the two configurations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointError {
    pub trial: usize,
    pub index: usize,
    pub measured: Vec3,
    pub reference: Vec3,
    pub error_m: f64,
}

pub fn write_point_errors<W: Write>(points: &[PointError], mut w: W) -> std::io::Result<()> {
    writeln!(w, "trial,index,x,y,z,ref_x,ref_y,ref_z,error_mm")?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            p.trial,
            p.index,
            p.measured.x,
            p.measured.y,
            p.measured.z,
            p.reference.x,
            p.reference.y,
            p.reference.z,
            p.error_m * 1000.0
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exp1Run {
    pub stats: ErrorStats,
    pub points: Vec<PointError>,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exp1Report {
    pub glass: Exp1Run,
    pub opaque: Exp1Run,
}

/// Point localisation: for each plan pose, touch the true edge point and
/// the extracted BIP and compare tooltip positions. Runs the scene as given
/// and again with an opaque, bright-edged object on the same seeds.
pub fn run_experiment_1(
    scene: &Scene,
    harness: &Harness,
    plan: &ScanPlan,
    spec: &ScannerSpec,
    trials: usize,
    master_seed: u64,
) -> Result<Exp1Report, PipelineError> {
    let glass = localise(scene, harness, plan, spec, trials, master_seed)?;
    let m = scene.glass.material();
    let opaque_optics = MaterialOptics {
        edge_diffuse_albedo: MaterialOptics::opaque_edge().edge_diffuse_albedo,
        transmissive: false,
        ..*m
    };
    let opaque_scene = scene.with_glass(scene.glass.with_material(opaque_optics)?);
    let opaque = localise(&opaque_scene, harness, plan, spec, trials, master_seed)?;
    Ok(Exp1Report { glass, opaque })
}

fn localise(
    scene: &Scene,
    harness: &Harness,
    plan: &ScanPlan,
    spec: &ScannerSpec,
    trials: usize,
    master_seed: u64,
) -> Result<Exp1Run, PipelineError> {
    let mut refs = Vec::with_capacity(plan.poses.len());
    for pose in &plan.poses {
        let pe = true_edge_point(scene, pose)?;
        refs.push((pe, harness.touch(&pe, &harness.home)?));
    }
    let trial_ids: Vec<usize> = (0..trials).collect();
    let per_trial = par_map(&trial_ids, |_, &t| -> Result<(Vec<PointError>, usize), PipelineError> {
        let profiles = scan_all(scene, &plan.poses, spec, seed::derive(master_seed, t as u64));
        let mut out = Vec::new();
        let mut skipped = 0;
        for (k, profile) in profiles.iter().enumerate() {
            let Ok(bip) = extract_bip(profile, k, &scene.ground, spec) else {
                skipped += 1;
                continue;
            };
            let (pe, q_ref) = &refs[k];
            let q_actual = harness.touch(&bip.point, q_ref)?;
            out.push(PointError {
                trial: t,
                index: k,
                measured: bip.point,
                reference: *pe,
                error_m: harness.error(&q_actual, q_ref),
            });
        }
        Ok((out, skipped))
    });
    let mut points = Vec::new();
    let mut skipped = 0;
    for r in per_trial {
        let (p, s) = r?;
        points.extend(p);
        skipped += s;
    }
    let errors: Vec<f64> = points.iter().map(|p| p.error_m).collect();
    Ok(Exp1Run {
        stats: ErrorStats::from_metres(&errors),
        points,
        skipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Exp2Params {
    pub n_validation: usize,
    /// Border sampling used as the registration model, metres.
    pub model_spacing: f64,
    /// Tooltip path sampling, metres.
    pub path_spacing: f64,
    /// Metres per second, for the execution-stage estimate.
    pub tooltip_speed: f64,
}

impl Default for Exp2Params {
    fn default() -> Self {
        Self {
            n_validation: 12,
            model_spacing: 0.001,
            path_spacing: 0.01,
            tooltip_speed: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exp2Run {
    pub stats: ErrorStats,
    pub timing: TimingReport,
    pub points: Vec<PointError>,
    pub icp: IcpResult,
    pub trusted: bool,
    pub skipped: usize,
}

/// Pose estimation then touch validation: estimate `M'`, touch the nearest
/// point of `M'` to each validation point of the true border and compare
/// with touching the true point.
#[allow(clippy::too_many_arguments)]
pub fn run_experiment_2(
    scene: &Scene,
    harness: &Harness,
    plan: &ScanPlan,
    coarse_pose: &RigidTransform,
    spec: &ScannerSpec,
    icp: &IcpParams,
    params: &Exp2Params,
    seed: u64,
) -> Result<Exp2Run, PipelineError> {
    run_trial(scene, harness, plan, coarse_pose, spec, icp, params, seed, 0)
}

#[allow(clippy::too_many_arguments)]
fn run_trial(
    scene: &Scene,
    harness: &Harness,
    plan: &ScanPlan,
    coarse_pose: &RigidTransform,
    spec: &ScannerSpec,
    icp: &IcpParams,
    params: &Exp2Params,
    seed: u64,
    trial: usize,
) -> Result<Exp2Run, PipelineError> {
    if params.n_validation == 0 || !(params.path_spacing > 0.0) || !(params.tooltip_speed > 0.0) {
        return Err(PipelineError::InvalidParams(format!("{params:?}")));
    }
    let est = estimate_pose(
        scene,
        plan,
        &scene.glass,
        coarse_pose,
        spec,
        icp,
        params.model_spacing,
        seed,
    )?;
    let estimated = transform_model(&scene.glass, &est.icp.model_to_base);

    let t0 = Instant::now();
    let path = plan_contour_path(&estimated, &harness.r_approach, params.path_spacing);
    let mut q = harness.home;
    for pose in &path.poses {
        q = harness.touch(&pose.translation, &q)?;
    }
    let path_planning = t0.elapsed().as_secs_f64();

    let truth = scene.posed_glass();
    let offset = truth.perimeter() / (2 * params.n_validation) as f64;
    let mut points = Vec::with_capacity(params.n_validation);
    for (k, (_, p_true)) in truth
        .uniform_arc_points(params.n_validation, offset)
        .into_iter()
        .enumerate()
    {
        let q_ref = harness.touch(&p_true, &harness.home)?;
        let p_near = nearest_on_model(&estimated, &p_true);
        let q_touch = harness.touch(&p_near, &q_ref)?;
        points.push(PointError {
            trial,
            index: k,
            measured: p_near,
            reference: p_true,
            error_m: harness.error(&q_touch, &q_ref),
        });
    }
    let errors: Vec<f64> = points.iter().map(|p| p.error_m).collect();
    Ok(Exp2Run {
        stats: ErrorStats::from_metres(&errors),
        timing: TimingReport {
            scanning: est.scanning_s,
            pose_estimation: est.pose_estimation_s,
            path_planning,
            execution: path.length() / params.tooltip_speed,
        },
        points,
        trusted: est.trusted,
        skipped: est.bips.skipped.len(),
        icp: est.icp,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exp2Report {
    /// Over every validation point of every trial.
    pub stats: ErrorStats,
    /// Mean per-trial stage durations.
    pub timing: TimingReport,
    pub runs: Vec<Exp2Run>,
}

/// Monte Carlo repetition of experiment 2; trial `t` uses the seed derived
/// from `master_seed` and `t`.
#[allow(clippy::too_many_arguments)]
pub fn run_experiment_2_trials(
    scene: &Scene,
    harness: &Harness,
    plan: &ScanPlan,
    coarse_pose: &RigidTransform,
    spec: &ScannerSpec,
    icp: &IcpParams,
    params: &Exp2Params,
    trials: usize,
    master_seed: u64,
) -> Result<Exp2Report, PipelineError> {
    let ids: Vec<usize> = (0..trials).collect();
    let runs = par_map(&ids, |_, &t| {
        run_trial(
            scene,
            harness,
            plan,
            coarse_pose,
            spec,
            icp,
            params,
            seed::derive(master_seed, t as u64),
            t,
        )
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let errors: Vec<f64> = runs.iter().flat_map(|r| r.points.iter().map(|p| p.error_m)).collect();
    let timings: Vec<TimingReport> = runs.iter().map(|r| r.timing).collect();
    Ok(Exp2Report {
        stats: ErrorStats::from_metres(&errors),
        timing: TimingReport::mean(&timings),
        runs,
    })
}
