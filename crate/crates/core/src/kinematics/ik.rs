//! Damped least-squares IK on a central-difference Jacobian.

use nalgebra::{Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use super::{fk, ArmModel, JointState, KinematicsError, JOINTS};
use crate::geom::{log_so3, RigidTransform};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IkParams {
    pub damping: f64,
    pub max_iterations: usize,
    /// Central-difference step, radians.
    pub fd_step: f64,
    /// Acceptance tolerances for reporting convergence.
    pub position_tol: f64,
    pub orientation_tol: f64,
    /// The solver keeps iterating until these tighter targets are met.
    pub position_target: f64,
    pub orientation_target: f64,
    /// Largest per-joint change in one iteration, radians.
    pub max_step: f64,
}

impl Default for IkParams {
    fn default() -> Self {
        Self {
            damping: 0.01,
            max_iterations: 200,
            fd_step: 1e-6,
            position_tol: 1e-5,
            orientation_tol: 1e-4,
            position_target: 1e-11,
            orientation_target: 1e-10,
            max_step: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkSolution {
    pub q: JointState,
    pub iterations: usize,
    pub position_error: f64,
    pub orientation_error: f64,
}

/// Pose error as a spatial twist: translation difference stacked on the
/// axis-angle of `target · currentᵀ`.
fn pose_error(target: &RigidTransform, current: &RigidTransform) -> Vector6<f64> {
    let dp = target.translation - current.translation;
    let dr = log_so3(&(target.rotation * current.rotation.transpose()));
    Vector6::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z)
}

fn jacobian(arm: &ArmModel, tool: &RigidTransform, q: &JointState, h: f64) -> Matrix6<f64> {
    let mut j = Matrix6::zeros();
    for i in 0..JOINTS {
        let mut plus = *q;
        let mut minus = *q;
        plus.0[i] += h;
        minus.0[i] -= h;
        let tp = fk(arm, &plus).compose(tool);
        let tm = fk(arm, &minus).compose(tool);
        let col = pose_error(&tp, &tm) / (2.0 * h);
        j.set_column(i, &col);
    }
    j
}

/// Joint configuration placing the tooltip (flange · `tool`) at `target`,
/// starting from `seed`.
pub fn solve_ik(
    arm: &ArmModel,
    tool: &RigidTransform,
    target: &RigidTransform,
    seed: &JointState,
    params: &IkParams,
) -> Result<IkSolution, KinematicsError> {
    let mut q = *seed;
    let lambda2 = params.damping * params.damping;
    let mut iterations = 0;
    let mut err = pose_error(target, &fk(arm, &q).compose(tool));
    loop {
        let pos = err.fixed_rows::<3>(0).norm();
        let rot = err.fixed_rows::<3>(3).norm();
        let done = pos <= params.position_target && rot <= params.orientation_target;
        if done || iterations >= params.max_iterations {
            if pos > params.position_tol || rot > params.orientation_tol {
                return Err(KinematicsError::NoConvergence {
                    iterations,
                    position_error: pos,
                    orientation_error: rot,
                });
            }
            arm.check_limits(&q)?;
            return Ok(IkSolution {
                q,
                iterations,
                position_error: pos,
                orientation_error: rot,
            });
        }
        let j = jacobian(arm, tool, &q, params.fd_step);
        let jjt = j * j.transpose() + Matrix6::identity() * lambda2;
        let Some(y) = jjt.cholesky().map(|c| c.solve(&err)) else {
            return Err(KinematicsError::NoConvergence {
                iterations,
                position_error: pos,
                orientation_error: rot,
            });
        };
        let mut dq = j.transpose() * y;
        let largest = dq.amax();
        if largest > params.max_step {
            dq *= params.max_step / largest;
        }
        for i in 0..JOINTS {
            q.0[i] += dq[i];
        }
        iterations += 1;
        err = pose_error(target, &fk(arm, &q).compose(tool));
    }
}
