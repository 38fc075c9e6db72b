//! Six-joint serial arm kinematics with standard (distal) Denavit-Hartenberg
//! parameters, tooltip and scanner calibration transforms, the tooltip
//! localisation error, and a numeric inverse-kinematics helper.

mod ik;

pub use ik::{solve_ik, IkParams, IkSolution};

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::geom::{RigidTransform, Vec3};

pub const JOINTS: usize = 6;

#[derive(Debug, thiserror::Error)]
pub enum KinematicsError {
    #[error("inverse kinematics did not converge after {iterations} iterations (position error {position_error:.3e} m, orientation error {orientation_error:.3e} rad)")]
    NoConvergence {
        iterations: usize,
        position_error: f64,
        orientation_error: f64,
    },
    #[error("joint {joint} value {value} outside limits [{low}, {high}]")]
    JointLimitViolation {
        joint: usize,
        value: f64,
        low: f64,
        high: f64,
    },
    #[error("invalid arm: {0}")]
    InvalidArm(String),
}

/// One standard DH row. Link transform: `Rz(θ + theta_offset) · Tz(d) ·
/// Tx(a) · Rx(alpha)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DhRow {
    pub a: f64,
    pub alpha: f64,
    pub d: f64,
    pub theta_offset: f64,
}

impl DhRow {
    pub fn link_transform(&self, q: f64) -> RigidTransform {
        let (st, ct) = (q + self.theta_offset).sin_cos();
        let (sa, ca) = self.alpha.sin_cos();
        RigidTransform::new(
            Matrix3::new(ct, -st * ca, st * sa, st, ct * ca, -ct * sa, 0.0, sa, ca),
            Vec3::new(self.a * ct, self.a * st, self.d),
        )
    }
}

/// Joint configuration in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct JointState(pub [f64; JOINTS]);

impl JointState {
    pub fn zeros() -> Self {
        Self([0.0; JOINTS])
    }

    pub fn max_abs_diff(&self, other: &JointState) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Kinematic description of the arm.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmModel {
    rows: [DhRow; JOINTS],
    limits: [(f64, f64); JOINTS],
}

impl ArmModel {
    pub fn new(rows: [DhRow; JOINTS], limits: [(f64, f64); JOINTS]) -> Result<Self, KinematicsError> {
        for (j, (lo, hi)) in limits.iter().enumerate() {
            if !(lo < hi) {
                return Err(KinematicsError::InvalidArm(format!(
                    "joint {j} limits must satisfy low < high"
                )));
            }
        }
        if rows
            .iter()
            .any(|r| ![r.a, r.alpha, r.d, r.theta_offset].iter().all(|v| v.is_finite()))
        {
            return Err(KinematicsError::InvalidArm("non-finite DH parameter".into()));
        }
        Ok(Self { rows, limits })
    }

    /// 6R arm with UR5-style DH parameters (reach ≈ 0.85 m).
    pub fn default_test_arm() -> Self {
        let rows = [
            DhRow {
                a: 0.0,
                alpha: FRAC_PI_2,
                d: 0.089159,
                theta_offset: 0.0,
            },
            DhRow {
                a: -0.425,
                alpha: 0.0,
                d: 0.0,
                theta_offset: 0.0,
            },
            DhRow {
                a: -0.39225,
                alpha: 0.0,
                d: 0.0,
                theta_offset: 0.0,
            },
            DhRow {
                a: 0.0,
                alpha: FRAC_PI_2,
                d: 0.10915,
                theta_offset: 0.0,
            },
            DhRow {
                a: 0.0,
                alpha: -FRAC_PI_2,
                d: 0.09465,
                theta_offset: 0.0,
            },
            DhRow {
                a: 0.0,
                alpha: 0.0,
                d: 0.0823,
                theta_offset: 0.0,
            },
        ];
        Self::new(rows, [(-2.0 * PI, 2.0 * PI); JOINTS]).expect("valid default arm")
    }

    pub fn rows(&self) -> &[DhRow; JOINTS] {
        &self.rows
    }

    pub fn limits(&self) -> &[(f64, f64); JOINTS] {
        &self.limits
    }

    /// Sum of `|a| + |d|` over all links.
    pub fn total_link_length(&self) -> f64 {
        self.rows.iter().map(|r| r.a.abs() + r.d.abs()).sum()
    }

    pub fn check_limits(&self, q: &JointState) -> Result<(), KinematicsError> {
        for (j, (&v, &(low, high))) in q.0.iter().zip(&self.limits).enumerate() {
            if v < low || v > high {
                return Err(KinematicsError::JointLimitViolation {
                    joint: j,
                    value: v,
                    low,
                    high,
                });
            }
        }
        Ok(())
    }
}

/// Flange-mounted calibration transforms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSet {
    pub flange_to_tooltip: RigidTransform,
    pub flange_to_scanner: RigidTransform,
}

impl Default for CalibrationSet {
    fn default() -> Self {
        Self {
            flange_to_tooltip: RigidTransform::from_translation(Vec3::new(0.0, 0.0, 0.15)),
            flange_to_scanner: RigidTransform::from_translation(Vec3::new(0.0, 0.08, 0.05)),
        }
    }
}

/// Base-to-flange transform: the ordered product of the six link transforms.
pub fn fk(arm: &ArmModel, q: &JointState) -> RigidTransform {
    arm.rows
        .iter()
        .zip(q.0.iter())
        .fold(RigidTransform::identity(), |acc, (row, &qi)| {
            acc.compose(&row.link_transform(qi))
        })
}

pub fn tooltip_pose(arm: &ArmModel, q: &JointState, cal: &CalibrationSet) -> RigidTransform {
    fk(arm, q).compose(&cal.flange_to_tooltip)
}

/// Distance between the tooltip positions at two configurations (metres).
/// Only the translation parts are compared.
pub fn localisation_error(arm: &ArmModel, q_a: &JointState, q_b: &JointState, cal: &CalibrationSet) -> f64 {
    let a = tooltip_pose(arm, q_a, cal).translation;
    let b = tooltip_pose(arm, q_b, cal).translation;
    (a - b).norm()
}

/// JSON form of the arm plus its flange calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmConfig {
    pub dh: [[f64; 4]; JOINTS],
    pub limits: [[f64; 2]; JOINTS],
    pub flange_to_tooltip: RigidTransform,
    pub flange_to_scanner: RigidTransform,
}

impl Default for ArmConfig {
    fn default() -> Self {
        Self::from_parts(&ArmModel::default_test_arm(), &CalibrationSet::default())
    }
}

impl ArmConfig {
    pub fn from_parts(arm: &ArmModel, cal: &CalibrationSet) -> Self {
        Self {
            dh: arm.rows.map(|r| [r.a, r.alpha, r.d, r.theta_offset]),
            limits: arm.limits.map(|(lo, hi)| [lo, hi]),
            flange_to_tooltip: cal.flange_to_tooltip,
            flange_to_scanner: cal.flange_to_scanner,
        }
    }

    pub fn build(&self) -> Result<(ArmModel, CalibrationSet), KinematicsError> {
        let rows = self.dh.map(|[a, alpha, d, theta_offset]| DhRow {
            a,
            alpha,
            d,
            theta_offset,
        });
        let limits = self.limits.map(|[lo, hi]| (lo, hi));
        Ok((
            ArmModel::new(rows, limits)?,
            CalibrationSet {
                flange_to_tooltip: self.flange_to_tooltip,
                flange_to_scanner: self.flange_to_scanner,
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn zero_arm() -> ArmModel {
        let zero = DhRow {
            a: 0.0,
            alpha: 0.0,
            d: 0.0,
            theta_offset: 0.0,
        };
        ArmModel::new([zero; JOINTS], [(-PI, PI); JOINTS]).unwrap()
    }

    fn random_q(rng: &mut ChaCha8Rng) -> JointState {
        JointState(std::array::from_fn(|_| rng.random_range(-PI..PI)))
    }

    /// Homogeneous 4x4 chain built entry by entry from the DH definition.
    fn oracle_chain(arm: &ArmModel, q: &JointState) -> nalgebra::Matrix4<f64> {
        let mut m = nalgebra::Matrix4::identity();
        for (row, qi) in arm.rows().iter().zip(q.0) {
            let th = qi + row.theta_offset;
            let rz = nalgebra::Matrix4::new(
                th.cos(),
                -th.sin(),
                0.0,
                0.0,
                th.sin(),
                th.cos(),
                0.0,
                0.0,
                0.0,
                0.0,
                1.0,
                0.0,
                0.0,
                0.0,
                0.0,
                1.0,
            );
            let tz = nalgebra::Matrix4::new_translation(&Vec3::new(0.0, 0.0, row.d));
            let tx = nalgebra::Matrix4::new_translation(&Vec3::new(row.a, 0.0, 0.0));
            let rx = nalgebra::Matrix4::new(
                1.0,
                0.0,
                0.0,
                0.0,
                0.0,
                row.alpha.cos(),
                -row.alpha.sin(),
                0.0,
                0.0,
                row.alpha.sin(),
                row.alpha.cos(),
                0.0,
                0.0,
                0.0,
                0.0,
                1.0,
            );
            m = m * rz * tz * tx * rx;
        }
        m
    }

    #[test]
    fn zero_table_is_identity() {
        let t = fk(&zero_arm(), &JointState::zeros());
        assert!(t.max_abs_diff(&RigidTransform::identity()) == 0.0);
    }

    #[test]
    fn single_offset_translates() {
        let mut rows = *zero_arm().rows();
        rows[0].d = 0.3;
        let arm = ArmModel::new(rows, [(-PI, PI); JOINTS]).unwrap();
        let t = fk(&arm, &JointState::zeros());
        assert_abs_diff_eq!(t.translation, Vec3::new(0.0, 0.0, 0.3), epsilon = 1e-15);
    }

    #[test]
    fn matches_matrix_chain_oracle() {
        let arm = ArmModel::default_test_arm();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let q = random_q(&mut rng);
            let t = fk(&arm, &q);
            let m = oracle_chain(&arm, &q);
            for r in 0..3 {
                for c in 0..3 {
                    assert_abs_diff_eq!(t.rotation[(r, c)], m[(r, c)], epsilon = 1e-12);
                }
                assert_abs_diff_eq!(t.translation[r], m[(r, 3)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn tooltip_composition() {
        let arm = ArmModel::default_test_arm();
        let q = JointState([0.1, -1.2, 1.4, -1.7, -1.5, 0.3]);
        let ident = CalibrationSet {
            flange_to_tooltip: RigidTransform::identity(),
            flange_to_scanner: RigidTransform::identity(),
        };
        assert_eq!(tooltip_pose(&arm, &q, &ident), fk(&arm, &q));
        let cal = CalibrationSet {
            flange_to_tooltip: RigidTransform::from_translation(Vec3::new(0.0, 0.0, 0.2)),
            ..ident
        };
        let f = fk(&arm, &q);
        let expected = f.translation + f.rotation.column(2) * 0.2;
        assert_abs_diff_eq!(tooltip_pose(&arm, &q, &cal).translation, expected, epsilon = 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cal = CalibrationSet {
            flange_to_tooltip: RigidTransform::from_euler(0.3, 0.2, -0.4, Vec3::new(0.01, -0.02, 0.12)),
            ..ident
        };
        for _ in 0..100 {
            let q = random_q(&mut rng);
            let m = oracle_chain(&arm, &q);
            let tool = cal.flange_to_tooltip;
            let expected = m.fixed_view::<3, 3>(0, 0) * tool.translation + m.fixed_view::<3, 1>(0, 3);
            assert_abs_diff_eq!(tooltip_pose(&arm, &q, &cal).translation, expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn localisation_error_is_a_pseudometric() {
        let arm = ArmModel::default_test_arm();
        let cal = CalibrationSet::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let a = random_q(&mut rng);
            let b = random_q(&mut rng);
            let ab = localisation_error(&arm, &a, &b, &cal);
            assert!(ab >= 0.0);
            assert_eq!(ab, localisation_error(&arm, &b, &a, &cal));
            assert_eq!(localisation_error(&arm, &a, &a, &cal), 0.0);
        }
    }

    #[test]
    fn localisation_error_of_constructed_offset() {
        // Planar two-link arm with equal links: (θ, −2θ) keeps the tip on
        // the x axis at x = cos θ, so cos θ = 0.999 moves it by 1 mm.
        let mut rows = *zero_arm().rows();
        rows[0].a = 0.5;
        rows[1].a = 0.5;
        let arm = ArmModel::new(rows, [(-PI, PI); JOINTS]).unwrap();
        let cal = CalibrationSet::default();
        let th = 0.999f64.acos();
        let qa = JointState::zeros();
        let qb = JointState([th, -2.0 * th, 0.0, 0.0, 0.0, 0.0]);
        let d = tooltip_pose(&arm, &qa, &cal).translation - tooltip_pose(&arm, &qb, &cal).translation;
        assert_abs_diff_eq!(d, Vec3::new(0.001, 0.0, 0.0), epsilon = 1e-12);
        assert_abs_diff_eq!(localisation_error(&arm, &qa, &qb, &cal), 0.001, epsilon = 1e-12);
    }

    #[test]
    fn fk_is_lipschitz_in_joint_space() {
        let arm = ArmModel::default_test_arm();
        let l = arm.total_link_length();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..2000 {
            let q = random_q(&mut rng);
            let scale = 10f64.powf(rng.random_range(-6.0..0.0));
            let d: [f64; JOINTS] = std::array::from_fn(|_| rng.random_range(-scale..scale));
            let q2 = JointState(std::array::from_fn(|i| q.0[i] + d[i]));
            let moved = (fk(&arm, &q).translation - fk(&arm, &q2).translation).norm();
            let l1: f64 = d.iter().map(|v| v.abs()).sum();
            assert!(moved <= l * l1 + 1e-15);
        }
    }

    #[test]
    fn arm_config_round_trip_and_limits() {
        let cfg = ArmConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ArmConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let (arm, _) = back.build().unwrap();
        assert_eq!(arm, ArmModel::default_test_arm());

        let mut bad = cfg;
        bad.limits[2] = [1.0, -1.0];
        assert!(bad.build().is_err());
        let arm = ArmModel::default_test_arm();
        assert!(arm.check_limits(&JointState([7.0, 0.0, 0.0, 0.0, 0.0, 0.0])).is_err());
    }
}
