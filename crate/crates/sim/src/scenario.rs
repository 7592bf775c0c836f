//! Scenario files (TOML) and `KEY=VALUE` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lidar::SensorConfig;
use crate::terrain::Terrain;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("invalid scenario field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("bad override `{0}` (expected KEY=VALUE)")]
    Override(String),
}

fn invalid(field: &str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid { field: field.into(), reason: reason.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimationMode {
    TrueNormal,
    EstimatedNormal,
    HorizontalNormal,
}

impl EstimationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::TrueNormal => "true_normal",
            Self::EstimatedNormal => "estimated_normal",
            Self::HorizontalNormal => "horizontal_normal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rates {
    #[serde(default = "default_sim_hz")]
    pub sim_hz: f64,
    #[serde(default = "default_control_hz")]
    pub control_hz: f64,
}

fn default_sim_hz() -> f64 {
    1000.0
}
fn default_control_hz() -> f64 {
    500.0
}

impl Default for Rates {
    fn default() -> Self {
        Self { sim_hz: default_sim_hz(), control_hz: default_control_hz() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialPose {
    #[serde(default)]
    pub x: f64,
    #[serde(default)]
    pub y: f64,
    #[serde(default)]
    pub yaw: f64,
    #[serde(default = "default_height")]
    pub height: f64,
}

fn default_height() -> f64 {
    0.25
}

impl Default for InitialPose {
    fn default() -> Self {
        Self { x: 0.0, y: 0.0, yaw: 0.0, height: default_height() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSettings {
    /// Pose gains for `(phi, h, alpha, beta, gamma)`.
    #[serde(default = "default_kp")]
    pub kp: [f64; 5],
    /// Defaults to `sqrt(kp)`.
    #[serde(default)]
    pub kd: Option<[f64; 5]>,
    #[serde(default = "default_lqr_q")]
    pub lqr_q: [f64; 4],
    #[serde(default = "default_lqr_r")]
    pub lqr_r: f64,
    /// Lookahead of the normal-map query along the heading, m.
    #[serde(default = "default_lookahead")]
    pub lookahead: f64,
    /// EMA factor of the normal filter (per control step).
    #[serde(default = "default_smoothing")]
    pub filter_smoothing: f64,
    #[serde(default = "default_epsilon")]
    pub hqp_epsilon: f64,
    /// Write the per-solve HQP CSV next to the log.
    #[serde(default)]
    pub hqp_debug: bool,
}

fn default_kp() -> [f64; 5] {
    wbc_core::task_control::DEFAULT_KP
}
fn default_lqr_q() -> [f64; 4] {
    [100.0, 1.0, 10.0, 1.0]
}
fn default_lqr_r() -> f64 {
    1.0
}
fn default_lookahead() -> f64 {
    0.1
}
fn default_smoothing() -> f64 {
    0.05
}
fn default_epsilon() -> f64 {
    1e-8
}

impl Default for ControllerSettings {
    fn default() -> Self {
        Self {
            kp: default_kp(),
            kd: None,
            lqr_q: default_lqr_q(),
            lqr_r: default_lqr_r(),
            lookahead: default_lookahead(),
            filter_smoothing: default_smoothing(),
            hqp_epsilon: default_epsilon(),
            hqp_debug: false,
        }
    }
}

/// Time-tagged setpoint; references are linearly interpolated between
/// setpoints and held after the last one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Setpoint {
    pub t: f64,
    #[serde(default)]
    pub split: f64,
    #[serde(default = "default_height")]
    pub height: f64,
    #[serde(default)]
    pub roll: f64,
    #[serde(default)]
    pub pitch: f64,
    #[serde(default)]
    pub yaw: f64,
    /// Forward speed along the heading, m/s.
    #[serde(default)]
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Disturbance {
    /// Horizontal force on the base ramped from 0 to `force` over
    /// `duration`, then released.
    Push {
        t_start: f64,
        duration: f64,
        force: f64,
        #[serde(default = "default_push_direction")]
        direction: [f64; 3],
        #[serde(default)]
        point: [f64; 3],
    },
    /// Frictionless block dropped onto the base; the impulse acts over one
    /// simulation step. Without `direction` it points down the slope.
    Block {
        t: f64,
        mass: f64,
        drop_height: f64,
        #[serde(default)]
        direction: Option<[f64; 3]>,
        #[serde(default = "default_block_point")]
        point: [f64; 3],
    },
}

fn default_push_direction() -> [f64; 3] {
    [-1.0, 0.0, 0.0]
}
fn default_block_point() -> [f64; 3] {
    [0.0, 0.0, 0.1]
}

impl Disturbance {
    pub fn start(&self) -> f64 {
        match self {
            Self::Push { t_start, .. } => *t_start,
            Self::Block { t, .. } => *t,
        }
    }

    /// Time the disturbance stops acting.
    pub fn release(&self) -> f64 {
        match self {
            Self::Push { t_start, duration, .. } => t_start + duration,
            Self::Block { t, .. } => *t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct MetricSettings {
    /// Statistics ignore samples before this time.
    #[serde(default)]
    pub start: f64,
    /// x of the line whose crossings define entry and exit windows
    /// (defaults to the slope foot).
    #[serde(default)]
    pub transition_x: Option<f64>,
    /// Window after each crossing, s.
    #[serde(default)]
    pub transition_window: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub duration: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub estimation_mode: EstimationMode,
    /// Robot parameter file; the bundled robot when absent.
    #[serde(default)]
    pub robot: Option<PathBuf>,
    #[serde(default)]
    pub rates: Rates,
    #[serde(default)]
    pub sensor: SensorConfig,
    pub terrain: Terrain,
    #[serde(default)]
    pub initial: InitialPose,
    #[serde(default)]
    pub controller: ControllerSettings,
    #[serde(default)]
    pub reference: Vec<Setpoint>,
    #[serde(default)]
    pub disturbance: Vec<Disturbance>,
    #[serde(default)]
    pub metrics: MetricSettings,
}

fn default_seed() -> u64 {
    7
}
fn default_mode() -> EstimationMode {
    EstimationMode::TrueNormal
}

/// Parses `VALUE` as a TOML value, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Sets a dotted key (`controller.lqr_q`, `disturbance.0.force`) in a TOML tree.
pub fn apply_override(root: &mut toml::Value, key: &str, raw: &str) -> Result<(), ScenarioError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ScenarioError::Override(format!("{key}={raw}")));
    }
    let mut node = root;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        node = match node {
            toml::Value::Table(t) => {
                if last {
                    t.insert(part.to_string(), parse_value(raw));
                    return Ok(());
                }
                t.entry(part.to_string()).or_insert_with(|| toml::Value::Table(Default::default()))
            }
            toml::Value::Array(a) => {
                let idx: usize = part.parse().map_err(|_| invalid(key, format!("`{part}` is not an array index")))?;
                let len = a.len();
                let slot = a.get_mut(idx).ok_or_else(|| invalid(key, format!("index {idx} out of range ({len} entries)")))?;
                if last {
                    *slot = parse_value(raw);
                    return Ok(());
                }
                slot
            }
            _ => return Err(invalid(key, format!("`{part}` is not inside a table"))),
        };
    }
    Ok(())
}

impl Scenario {
    pub fn from_toml_str(text: &str, overrides: &[(String, String)]) -> Result<Self, ScenarioError> {
        let mut root: toml::Value = text
            .parse::<toml::Table>()
            .map(toml::Value::Table)
            .map_err(|e| ScenarioError::Parse(e.to_string()))?;
        for (k, v) in overrides {
            apply_override(&mut root, k, v)?;
        }
        let scenario: Scenario = root.try_into().map_err(|e: toml::de::Error| ScenarioError::Parse(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_file(path: impl AsRef<Path>, overrides: &[(String, String)]) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        let mut s = Self::from_toml_str(&text, overrides)?;
        if let (Some(robot), Some(dir)) = (&s.robot, path.parent()) {
            if robot.is_relative() {
                s.robot = Some(dir.join(robot));
            }
        }
        Ok(s)
    }

    pub fn sim_dt(&self) -> f64 {
        1.0 / self.rates.sim_hz
    }

    /// Simulation steps per control period.
    pub fn control_decimation(&self) -> usize {
        (self.rates.sim_hz / self.rates.control_hz).round() as usize
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.duration > 0.0) {
            return Err(invalid("duration", "must be positive"));
        }
        let r = &self.rates;
        if !(r.sim_hz > 0.0) || !(r.control_hz > 0.0) {
            return Err(invalid("rates", "rates must be positive"));
        }
        if r.sim_hz < r.control_hz {
            return Err(invalid("rates.control_hz", "must not exceed rates.sim_hz"));
        }
        let ratio = r.sim_hz / r.control_hz;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return Err(invalid("rates.control_hz", "sim_hz must be an integer multiple of control_hz"));
        }
        let s = &self.sensor;
        if !(s.radius > 0.0) || !(s.density > 0.0) || !(s.noise >= 0.0) || !(s.rate_hz > 0.0) {
            return Err(invalid("sensor", "radius, density and rate_hz must be positive, noise >= 0"));
        }
        self.terrain.validate().map_err(|e| invalid("terrain", e))?;
        if !(self.initial.height > 0.0) {
            return Err(invalid("initial.height", "must be positive"));
        }
        let c = &self.controller;
        if c.kp.iter().any(|&k| !(k > 0.0)) {
            return Err(invalid("controller.kp", "gains must be positive"));
        }
        if c.kd.is_some_and(|kd| kd.iter().any(|&k| !(k > 0.0))) {
            return Err(invalid("controller.kd", "gains must be positive"));
        }
        if c.lqr_q.iter().any(|&q| !(q >= 0.0)) || !(c.lqr_r > 0.0) {
            return Err(invalid("controller.lqr_q", "weights must be >= 0 and lqr_r > 0"));
        }
        if !(c.filter_smoothing > 0.0 && c.filter_smoothing <= 1.0) {
            return Err(invalid("controller.filter_smoothing", "must be in (0, 1]"));
        }
        if !(c.hqp_epsilon > 0.0) {
            return Err(invalid("controller.hqp_epsilon", "must be positive"));
        }
        let mut last = f64::NEG_INFINITY;
        for (i, sp) in self.reference.iter().enumerate() {
            if !(sp.t > last) {
                return Err(invalid(&format!("reference.{i}.t"), "setpoint times must be strictly increasing"));
            }
            if !(sp.height > 0.0) {
                return Err(invalid(&format!("reference.{i}.height"), "must be positive"));
            }
            last = sp.t;
        }
        for (i, d) in self.disturbance.iter().enumerate() {
            match d {
                Disturbance::Push { duration, force, .. } => {
                    if !(*duration > 0.0) || !force.is_finite() {
                        return Err(invalid(&format!("disturbance.{i}"), "push needs duration > 0 and a finite force"));
                    }
                }
                Disturbance::Block { mass, drop_height, .. } => {
                    if !(*mass > 0.0) || !(*drop_height >= 0.0) {
                        return Err(invalid(&format!("disturbance.{i}"), "block needs mass > 0 and drop_height >= 0"));
                    }
                }
            }
        }
        Ok(())
    }
}
