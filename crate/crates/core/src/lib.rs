//! Pose estimation of transparent (glass) objects from sparse laser edge
//! measurements.
//!
//! The crate is organised bottom-up:
//!
//! - [`geom`]: rigid transforms, point clouds, k-d tree, rigid fitting
//! - [`model`]: glass border/surface model, file format, generators
//! - [`kinematics`]: 6-DOF DH arm, tooltip calibration, localisation error, IK
//! - [`scansim`]: laser line scanner simulator with Fresnel glass optics
//! - [`bip`]: one border identifier point per scan profile
//! - [`icp`]: registration of the sparse border points against the model
//! - [`pipeline`]: scan planning, pose estimation, contour paths and the
//!   two validation experiments
//! - [`config`]: JSON experiment configuration with dotted-path overrides

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bip;
pub mod config;
pub mod geom;
pub mod icp;
pub mod kinematics;
pub mod model;
pub mod pipeline;
pub mod scansim;
pub mod seed;

pub use geom::{PointCloud, RigidTransform, Vec3};
