//! Scenario configuration: TOML schema, defaults, validation, bundled scenarios.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::contact::FootParams;
use crate::controller::{ControllerConfig, StepTarget};
use crate::cost::CostWeights;
use crate::error::ConfigError;
use crate::solver::SolverSettings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialStance {
    /// Left foot loaded, right foot lifted.
    Single,
    Double,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobotConfig {
    pub mass: f64,
    pub gravity: f64,
    /// Reference CoM height; also the capture-point pendulum length.
    pub com_height: f64,
    pub left_foot: [f64; 3],
    /// Initial right foot position. Raised above the ground in single stance.
    pub right_foot: [f64; 3],
    pub initial_stance: InitialStance,
    /// Initial CoM offset from the point above the support centroid.
    pub initial_com_offset: [f64; 3],
    pub foot: FootParams,
}

impl Default for RobotConfig {
    fn default() -> Self {
        Self {
            mass: crate::model::DEFAULT_MASS,
            gravity: crate::model::DEFAULT_GRAVITY,
            com_height: 0.53,
            left_foot: [0.0, 0.08, 0.0],
            right_foot: [0.0, -0.08, 0.03],
            initial_stance: InitialStance::Single,
            initial_com_offset: [0.0; 3],
            foot: FootParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerSection {
    pub dt: f64,
    pub horizon: usize,
    /// Capture-point distance outside the support polygon that triggers a step.
    pub trigger_margin: f64,
    pub step_duration: f64,
    /// Maximum distance of a planned footstep from the stance foot.
    pub reach_radius: f64,
    pub step_target: StepTarget,
    /// Consecutive uncertified solves tolerated before the run is aborted.
    pub max_consecutive_failures: usize,
    pub weights: CostWeights,
    pub solver: SolverSettings,
}

impl Default for ControllerSection {
    fn default() -> Self {
        Self {
            dt: 0.01,
            horizon: 25,
            trigger_margin: 0.02,
            step_duration: 0.6,
            reach_radius: 0.35,
            step_target: StepTarget::default(),
            max_consecutive_failures: 10,
            weights: CostWeights::default(),
            solver: SolverSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PushConfig {
    pub start_time: f64,
    pub duration: f64,
    /// Newtons.
    pub magnitude: f64,
    /// Degrees from the lateral (rightward) axis, positive towards the front.
    pub angle_deg: f64,
}

impl Default for PushConfig {
    fn default() -> Self {
        Self {
            start_time: 0.5,
            duration: 0.1,
            magnitude: 0.0,
            angle_deg: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerConfig {
    /// First-order lag between commanded and realized wrench, seconds. Zero is ideal tracking.
    pub time_constant: f64,
    pub force_noise_std: f64,
    pub torque_noise_std: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            time_constant: 0.0,
            force_noise_std: 0.0,
            torque_noise_std: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub duration: f64,
    pub seed: u64,
    /// A CoM height below this ends the run as a fall.
    pub fall_height: f64,
    /// Actual touchdown time minus planned touchdown time, seconds.
    pub impact_timing_error: f64,
    pub swing_apex: f64,
    /// Push application point relative to the CoM.
    pub push_offset: [f64; 3],
    /// Distance from the support centroid counted as settled.
    pub settle_tolerance: f64,
    pub tracker: TrackerConfig,
    pub pushes: Vec<PushConfig>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            duration: 5.0,
            seed: 0,
            fall_height: 0.3,
            impact_timing_error: 0.0,
            swing_apex: 0.03,
            push_offset: [0.0; 3],
            settle_tolerance: 0.02,
            tracker: TrackerConfig::default(),
            pushes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlotToggles {
    pub com_xy: bool,
    pub com_z: bool,
    pub forces_z: bool,
    pub trigger_timeline: bool,
}

impl Default for PlotToggles {
    fn default() -> Self {
        Self {
            com_xy: true,
            com_z: true,
            forces_z: true,
            trigger_timeline: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub csv: bool,
    /// Record solve wall time in the CSV. Off by default so logs are reproducible.
    pub log_wall_time: bool,
    pub plots: PlotToggles,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            csv: true,
            log_wall_time: false,
            plots: PlotToggles::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub name: String,
    pub robot: RobotConfig,
    pub controller: ControllerSection,
    pub simulation: SimulationConfig,
    pub output: OutputConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "default".into(),
            robot: RobotConfig::default(),
            controller: ControllerSection::default(),
            simulation: SimulationConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

pub const BUNDLED_SCENARIOS: &[(&str, &str)] = &[
    ("side_push_20deg", include_str!("../scenarios/side_push_20deg.toml")),
    ("back_push_neg20deg", include_str!("../scenarios/back_push_neg20deg.toml")),
    ("front_push_45deg", include_str!("../scenarios/front_push_45deg.toml")),
    ("sub_threshold_push", include_str!("../scenarios/sub_threshold_push.toml")),
    ("no_push_regulation", include_str!("../scenarios/no_push_regulation.toml")),
    (
        "side_push_20deg_light_wrench_weights",
        include_str!("../scenarios/side_push_20deg_light_wrench_weights.toml"),
    ),
];

pub fn bundled_scenario_names() -> impl Iterator<Item = &'static str> {
    BUNDLED_SCENARIOS.iter().map(|(name, _)| *name)
}

pub fn bundled_scenario(name: &str) -> Result<ScenarioConfig, ConfigError> {
    let text = BUNDLED_SCENARIOS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| ConfigError::UnknownScenario(name.to_string()))?;
    ScenarioConfig::from_toml_str(text)
}

/// Loads a file path, or a bundled scenario when no such file exists.
pub fn load_scenario(source: &str) -> Result<ScenarioConfig, ConfigError> {
    let path = Path::new(source);
    if path.exists() {
        ScenarioConfig::from_path(path)
    } else if BUNDLED_SCENARIOS.iter().any(|(n, _)| *n == source) {
        bundled_scenario(source)
    } else {
        Err(ConfigError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or bundled scenario"),
        })
    }
}

impl ScenarioConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate_with_source(Some(text))?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.validate_with_source(None)
    }

    fn validate_with_source(&self, source: Option<&str>) -> Result<(), ConfigError> {
        let fail = |field: &str, reason: String| ConfigError::Invalid {
            field: field.to_string(),
            line: source.and_then(|s| locate_key(s, field)),
            reason,
        };
        let positive = |field: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(fail(field, format!("must be positive and finite, got {v}")))
            }
        };
        let non_negative = |field: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(fail(field, format!("must be non-negative and finite, got {v}")))
            }
        };

        let r = &self.robot;
        positive("robot.mass", r.mass)?;
        positive("robot.gravity", r.gravity)?;
        positive("robot.com_height", r.com_height)?;
        for (field, v) in [
            ("robot.left_foot", r.left_foot),
            ("robot.right_foot", r.right_foot),
            ("robot.initial_com_offset", r.initial_com_offset),
        ] {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(fail(field, "must be finite".into()));
            }
        }
        if r.initial_stance == InitialStance::Double && r.right_foot[2] != 0.0 {
            return Err(fail(
                "robot.right_foot",
                "must be on the ground (z = 0) in double stance".into(),
            ));
        }
        r.foot.validate().map_err(|e| match e {
            crate::error::ContactError::InvalidFootParams { field, reason } => {
                fail(&format!("robot.foot.{field}"), reason)
            }
            other => fail("robot.foot", other.to_string()),
        })?;

        let c = &self.controller;
        positive("controller.dt", c.dt)?;
        if c.horizon == 0 {
            return Err(fail("controller.horizon", "must be at least 1".into()));
        }
        non_negative("controller.trigger_margin", c.trigger_margin)?;
        positive("controller.step_duration", c.step_duration)?;
        positive("controller.reach_radius", c.reach_radius)?;
        if c.max_consecutive_failures == 0 {
            return Err(fail("controller.max_consecutive_failures", "must be at least 1".into()));
        }
        c.weights
            .validate()
            .map_err(|(field, reason)| fail(&format!("controller.weights.{field}"), reason))?;
        c.solver.validate().map_err(|e| match e {
            crate::error::SolverError::InvalidSettings { field, reason } => {
                fail(&format!("controller.solver.{field}"), reason)
            }
            other => fail("controller.solver", other.to_string()),
        })?;

        let s = &self.simulation;
        positive("simulation.duration", s.duration)?;
        non_negative("simulation.fall_height", s.fall_height)?;
        if !s.impact_timing_error.is_finite() || s.impact_timing_error <= -c.step_duration {
            return Err(fail(
                "simulation.impact_timing_error",
                "must be finite and greater than -controller.step_duration".into(),
            ));
        }
        non_negative("simulation.swing_apex", s.swing_apex)?;
        positive("simulation.settle_tolerance", s.settle_tolerance)?;
        non_negative("simulation.tracker.time_constant", s.tracker.time_constant)?;
        non_negative("simulation.tracker.force_noise_std", s.tracker.force_noise_std)?;
        non_negative("simulation.tracker.torque_noise_std", s.tracker.torque_noise_std)?;
        for p in &s.pushes {
            non_negative("simulation.pushes.start_time", p.start_time)?;
            positive("simulation.pushes.duration", p.duration)?;
            non_negative("simulation.pushes.magnitude", p.magnitude)?;
            if !p.angle_deg.is_finite() {
                return Err(fail("simulation.pushes.angle_deg", "must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn left_foot(&self) -> Vector3<f64> {
        Vector3::from(self.robot.left_foot)
    }

    pub fn right_foot(&self) -> Vector3<f64> {
        Vector3::from(self.robot.right_foot)
    }

    pub fn controller_config(&self) -> ControllerConfig {
        ControllerConfig {
            dt: self.controller.dt,
            horizon: self.controller.horizon,
            mass: self.robot.mass,
            gravity: self.robot.gravity,
            com_height: self.robot.com_height,
            left_foot: self.left_foot(),
            foot: self.robot.foot,
            weights: self.controller.weights.clone(),
            solver: self.controller.solver.clone(),
            trigger_margin: self.controller.trigger_margin,
            step_duration: self.controller.step_duration,
            reach_radius: self.controller.reach_radius,
            step_target: self.controller.step_target,
        }
    }
}

/// Line (1-based) of the key named by the last component of a dotted field
/// path, searched inside the table named by the preceding components.
pub fn locate_key(source: &str, field: &str) -> Option<usize> {
    let (table, key) = match field.rsplit_once('.') {
        Some((t, k)) => (t, k),
        None => ("", field),
    };
    let mut current = String::new();
    for (i, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if let Some(header) = line.strip_prefix("[[").and_then(|l| l.split("]]").next()) {
            current = header.trim().to_string();
            continue;
        }
        if let Some(header) = line.strip_prefix('[').and_then(|l| l.split(']').next()) {
            current = header.trim().to_string();
            continue;
        }
        if current == table {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}
