//! Experiment configuration: one JSON document composing the arm, the
//! glass and its placement, the scanner, ICP and the scan plan. Any field
//! can be overridden with a dotted path such as
//! `scanner.range_noise_sigma=0.0002`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::geom::{RigidTransform, Vec3};
use crate::icp::IcpParams;
use crate::kinematics::{ArmConfig, IkParams};
use crate::model::{load_glass_model, make_flat_panel, make_side_glass, GlassModel, MaterialOptics, ModelError};
use crate::pipeline::{generate_scan_poses, Exp2Params, Harness, PipelineError, ScanPlan};
use crate::scansim::{ScannerSpec, Scene};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config i/o: {0}")]
    Io(String),
    #[error("config parse: {0}")]
    Parse(String),
    #[error("override {0:?}: expected key=value")]
    BadOverride(String),
    #[error("override key {0:?} does not exist")]
    UnknownKey(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Roll/pitch/yaw in radians plus a translation in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseConfig {
    pub rpy: [f64; 3],
    pub translation: [f64; 3],
}

impl PoseConfig {
    pub fn transform(&self) -> RigidTransform {
        let [r, p, y] = self.rpy;
        let [x, yy, z] = self.translation;
        RigidTransform::from_euler(r, p, y, Vec3::new(x, yy, z))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Flat,
    Side,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GlassConfig {
    pub shape: Shape,
    /// `[width, height]` for flat panels, `[chord, height, curvature_radius]`
    /// for side glass.
    pub dims: Vec<f64>,
    pub thickness: f64,
    pub bevel_radius: f64,
    pub optics: MaterialOptics,
    /// Load this model manifest instead of generating; its own optics win.
    pub manifest: Option<PathBuf>,
}

impl Default for GlassConfig {
    fn default() -> Self {
        Self {
            shape: Shape::Side,
            dims: vec![0.45, 0.32, 0.8],
            thickness: 0.0045,
            bevel_radius: 0.0005,
            optics: MaterialOptics::default(),
            manifest: None,
        }
    }
}

impl GlassConfig {
    pub fn build(&self) -> Result<GlassModel, ModelError> {
        if let Some(path) = &self.manifest {
            return load_glass_model(path);
        }
        let model = match (self.shape, self.dims.as_slice()) {
            (Shape::Flat, &[w, h]) => make_flat_panel(w, h, self.thickness, self.bevel_radius)?,
            (Shape::Side, &[c, h, r]) => make_side_glass(c, h, r, self.thickness, self.bevel_radius)?,
            (shape, dims) => {
                return Err(ModelError::Validation(format!(
                    "{shape:?} glass takes different dims than {dims:?}"
                )))
            }
        };
        model.with_material(self.optics)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    /// Model frame to base frame.
    pub pose: PoseConfig,
    pub background_distance: f64,
    pub ground_albedo: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            pose: PoseConfig {
                rpy: [0.0, 0.0, 0.1],
                translation: [0.45, 0.0, 0.05],
            },
            background_distance: 0.57,
            ground_albedo: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlanConfig {
    pub n_scan: usize,
    pub incidence_deg: f64,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            n_scan: 12,
            incidence_deg: 45.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub trials: usize,
    pub arm: ArmConfig,
    pub ik: IkParams,
    /// Tooltip orientation for every touch; only the rotation is used.
    pub approach: PoseConfig,
    pub glass: GlassConfig,
    pub scene: SceneConfig,
    pub scanner: ScannerSpec,
    pub plan: PlanConfig,
    pub icp: IcpParams,
    /// Coarse pose error, applied in the model frame on top of the true pose.
    pub coarse_offset: PoseConfig,
    pub exp2: Exp2Params,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            trials: 100,
            arm: ArmConfig::default(),
            ik: IkParams::default(),
            approach: PoseConfig {
                rpy: [std::f64::consts::PI, 0.0, 0.0],
                translation: [0.0; 3],
            },
            glass: GlassConfig::default(),
            scene: SceneConfig::default(),
            scanner: ScannerSpec::default(),
            plan: PlanConfig::default(),
            icp: IcpParams::default(),
            coarse_offset: PoseConfig {
                rpy: [0.01, -0.01, 0.02],
                translation: [0.003, -0.002, 0.001],
            },
            exp2: Exp2Params::default(),
        }
    }
}

/// Sets `key` (dot separated) in `root` to `raw`, parsed as JSON when
/// possible and as a plain string otherwise. The key must already exist.
pub fn set_dotted(root: &mut Value, key: &str, raw: &str) -> Result<(), ConfigError> {
    let mut node = root;
    for part in key.split('.') {
        node = match node {
            Value::Object(map) => map.get_mut(part),
            Value::Array(items) => part.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| ConfigError::UnknownKey(key.to_string()))?;
    }
    *node = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok(())
}

/// Applies `key=value` overrides in order.
pub fn apply_overrides(root: &mut Value, overrides: &[String]) -> Result<(), ConfigError> {
    for o in overrides {
        let (key, raw) = o.split_once('=').ok_or_else(|| ConfigError::BadOverride(o.clone()))?;
        set_dotted(root, key.trim(), raw.trim())?;
    }
    Ok(())
}

impl ExperimentConfig {
    /// Reads `path` (or the defaults), then applies `overrides`. Missing
    /// fields take their defaults, so overrides can target any field.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let defaults = serde_json::to_value(Self::default()).expect("defaults serialize");
        let mut root = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| ConfigError::Io(format!("{}: {e}", p.display())))?;
                let mut file: Value = serde_json::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
                merge_defaults(&mut file, &defaults);
                file
            }
            None => defaults,
        };
        apply_overrides(&mut root, overrides)?;
        let cfg: Self = serde_json::from_value(root).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.plan.n_scan < 3 {
            return bad(format!("plan.n_scan must be at least 3, got {}", self.plan.n_scan));
        }
        if !(0.0..90.0).contains(&self.plan.incidence_deg) {
            return bad(format!(
                "plan.incidence_deg must be in [0, 90), got {}",
                self.plan.incidence_deg
            ));
        }
        self.scanner
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.icp.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn scene(&self) -> Result<Scene, PipelineError> {
        let glass = self.glass.build()?;
        Ok(Scene::new(
            glass,
            self.scene.pose.transform(),
            self.scene.background_distance,
            self.scene.ground_albedo,
        )?)
    }

    pub fn harness(&self, scene: &Scene) -> Result<Harness, PipelineError> {
        let (arm, cal) = self.arm.build()?;
        Harness::new(arm, cal, self.approach.transform(), self.ik, &scene.pose.translation)
    }

    pub fn coarse_pose(&self, scene: &Scene) -> RigidTransform {
        scene.pose.compose(&self.coarse_offset.transform())
    }

    /// Scan plan laid out on the border placed at `pose`.
    pub fn plan_at(&self, scene: &Scene, pose: &RigidTransform) -> ScanPlan {
        generate_scan_poses(
            &scene.glass,
            pose,
            self.plan.n_scan,
            self.plan.incidence_deg.to_radians(),
            self.scanner.standoff,
        )
    }
}

/// Fills fields missing from `file` with `defaults`, recursively.
fn merge_defaults(file: &mut Value, defaults: &Value) {
    if let (Value::Object(f), Value::Object(d)) = (file, defaults) {
        for (k, dv) in d {
            match f.get_mut(k) {
                Some(fv) => merge_defaults(fv, dv),
                None => {
                    f.insert(k.clone(), dv.clone());
                }
            }
        }
    }
}
