//! Scenario configuration: TOML schema, validation with field paths, and
//! dotted-path parameter overrides for sweeps.

use crate::comfort::{ClassifierKind, SynthConfig};
use crate::field::{Obstacle, ObstacleFieldParams, RoadFieldParams, RoadGeometry};
use crate::planner::PlannerConfig;
use crate::tracker::TrackerConfig;
use crate::vehicle::VehicleParams;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};

/// Validation failure at a specific config field.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error at `{}`: {}", self.path, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { path: path.into(), message: message.into() }
}

fn ensure(cond: bool, path: &str, message: &str) -> Result<(), ConfigError> {
    if cond {
        Ok(())
    } else {
        Err(err(path, message))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoadConfig {
    pub lane_width: f64,
    pub num_lanes: usize,
    /// Lateral position of the first (rightmost) boundary, m.
    pub y_min: f64,
    /// Index of the lane whose center is the reference.
    pub start_lane: usize,
}

impl Default for RoadConfig {
    fn default() -> Self {
        Self { lane_width: 3.5, num_lanes: 2, y_min: -1.75, start_lane: 0 }
    }
}

impl RoadConfig {
    pub fn geometry(&self) -> Result<RoadGeometry, ConfigError> {
        RoadGeometry::new(self.lane_width, self.num_lanes, self.y_min)
            .map_err(|e| err("road", e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldsConfig {
    pub obstacle: ObstacleFieldParams,
    pub road: RoadFieldParams,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    /// CSV dataset path; when absent the synthetic config is used.
    pub data: Option<PathBuf>,
    pub synth: SynthConfig,
    /// (t_poor, t_good) questionnaire-score thresholds.
    pub thresholds: [f64; 2],
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        Self {
            kind: ClassifierKind::Mahalanobis,
            data: None,
            synth: SynthConfig::default(),
            thresholds: [0.4, 0.7],
        }
    }
}

/// A complete closed-loop experiment description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub speed_kmh: f64,
    pub duration: f64,
    pub seed: u64,
    pub vehicle: VehicleParams,
    pub road: RoadConfig,
    pub obstacles: Vec<Obstacle>,
    pub planner: PlannerConfig,
    pub tracker: TrackerConfig,
    pub fields: FieldsConfig,
    pub classifier: ClassifierSpec,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            speed_kmh: 30.0,
            duration: 14.0,
            seed: 42,
            vehicle: VehicleParams::default(),
            road: RoadConfig::default(),
            obstacles: Vec::new(),
            planner: PlannerConfig::default(),
            tracker: TrackerConfig::default(),
            fields: FieldsConfig::default(),
            classifier: ClassifierSpec::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| err("<file>", e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| err("<file>", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serialization cannot fail")
    }

    /// Sha-256 over the canonical TOML form.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(self.to_toml().as_bytes());
        let out = hasher.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        ensure(
            (5.0..=120.0).contains(&self.speed_kmh),
            "speed_kmh",
            "must lie in [5, 120] km/h",
        )?;
        ensure(self.duration > 0.0, "duration", "must be > 0")?;

        let v = &self.vehicle;
        ensure(v.mass > 0.0, "vehicle.mass", "must be > 0")?;
        ensure(v.yaw_inertia > 0.0, "vehicle.yaw_inertia", "must be > 0")?;
        ensure(v.lf > 0.0, "vehicle.lf", "must be > 0")?;
        ensure(v.lr > 0.0, "vehicle.lr", "must be > 0")?;
        ensure(v.cf > 0.0, "vehicle.cf", "must be > 0")?;
        ensure(v.cr > 0.0, "vehicle.cr", "must be > 0")?;
        ensure(v.delta_max > 0.0, "vehicle.delta_max", "must be > 0")?;
        ensure(v.ddelta_max > 0.0, "vehicle.ddelta_max", "must be > 0")?;
        ensure(v.half_width > 0.0, "vehicle.half_width", "must be > 0")?;

        ensure(self.road.lane_width > 0.0, "road.lane_width", "must be > 0")?;
        ensure(self.road.num_lanes >= 1, "road.num_lanes", "must be >= 1")?;
        ensure(
            self.road.start_lane < self.road.num_lanes,
            "road.start_lane",
            "must index an existing lane",
        )?;

        for (i, o) in self.obstacles.iter().enumerate() {
            ensure(o.half_length > 0.0, &format!("obstacles[{i}].half_length"), "must be > 0")?;
            ensure(o.half_width > 0.0, &format!("obstacles[{i}].half_width"), "must be > 0")?;
            ensure(o.speed >= 0.0, &format!("obstacles[{i}].speed"), "must be >= 0")?;
        }

        let p = &self.planner;
        ensure(p.horizon_t > 0.0, "planner.horizon_t", "must be > 0")?;
        ensure(p.dt > 0.0 && p.dt <= p.horizon_t, "planner.dt", "must satisfy 0 < dt <= horizon_t")?;
        ensure(
            p.rollout_len() >= 3,
            "planner.horizon_t",
            "must span at least 3 rollout steps",
        )?;
        ensure(p.weights.q_track >= 0.0, "planner.weights.q_track", "must be >= 0")?;
        ensure(p.weights.s_obstacle >= 0.0, "planner.weights.s_obstacle", "must be >= 0")?;
        ensure(p.weights.l_road >= 0.0, "planner.weights.l_road", "must be >= 0")?;
        ensure(p.weights.r_confidence >= 0.0, "planner.weights.r_confidence", "must be >= 0")?;
        ensure(
            !p.lateral_offsets.is_empty() && p.lateral_offsets.contains(&0.0),
            "planner.lateral_offsets",
            "must be non-empty and include 0",
        )?;
        ensure(
            p.transition_length_gain > 0.0,
            "planner.transition_length_gain",
            "must be > 0",
        )?;
        ensure(p.clearance_margin >= 0.0, "planner.clearance_margin", "must be >= 0")?;
        ensure(p.replan_period > 0.0, "planner.replan_period", "must be > 0")?;

        let t = &self.tracker;
        ensure(t.nc >= 1 && t.nc <= t.np, "tracker.nc", "must satisfy 1 <= nc <= np")?;
        ensure(t.dt > 0.0 && t.dt <= 0.1, "tracker.dt", "must lie in (0, 0.1]")?;
        ensure(t.q_y >= 0.0, "tracker.q_y", "must be >= 0")?;
        ensure(t.q_psi >= 0.0, "tracker.q_psi", "must be >= 0")?;
        ensure(t.r_du >= 0.0, "tracker.r_du", "must be >= 0")?;
        ensure(t.rho_slack > 0.0, "tracker.rho_slack", "must be > 0")?;
        ensure(t.bounds.delta > 0.0, "tracker.bounds.delta", "must be > 0")?;
        ensure(
            t.bounds.ddelta_per_step > 0.0,
            "tracker.bounds.ddelta_per_step",
            "must be > 0",
        )?;
        ensure(t.bounds.beta > 0.0, "tracker.bounds.beta", "must be > 0")?;
        ensure(t.bounds.a_lat > 0.0, "tracker.bounds.a_lat", "must be > 0")?;
        ensure(t.bounds.yaw_rate > 0.0, "tracker.bounds.yaw_rate", "must be > 0")?;

        let steps = self.duration / t.dt;
        ensure(
            (steps - steps.round()).abs() < 1e-6,
            "duration",
            "must be an integer multiple of tracker.dt",
        )?;

        let f = &self.fields;
        ensure(f.obstacle.weight_s >= 0.0, "fields.obstacle.weight_s", "must be >= 0")?;
        ensure(f.obstacle.sigma_x0 > 0.0, "fields.obstacle.sigma_x0", "must be > 0")?;
        ensure(f.obstacle.sigma_y > 0.0, "fields.obstacle.sigma_y", "must be > 0")?;
        ensure(
            f.obstacle.speed_gain_kv >= 0.0,
            "fields.obstacle.speed_gain_kv",
            "must be >= 0",
        )?;
        ensure(f.road.weight_l >= 0.0, "fields.road.weight_l", "must be >= 0")?;
        ensure(f.road.sigma_b > 0.0, "fields.road.sigma_b", "must be > 0")?;

        let c = &self.classifier;
        ensure(
            0.0 <= c.thresholds[0] && c.thresholds[0] < c.thresholds[1] && c.thresholds[1] <= 1.0,
            "classifier.thresholds",
            "must satisfy 0 <= t_poor < t_good <= 1",
        )?;
        ensure(c.synth.n_per_class >= 2, "classifier.synth.n_per_class", "must be >= 2")?;
        ensure(
            (0.0..0.5).contains(&c.synth.label_noise),
            "classifier.synth.label_noise",
            "must lie in [0, 0.5)",
        )?;

        // The start lane center must sit inside the road for candidates to
        // exist.
        let road = self.road.geometry()?;
        let ref_y = road.lane_centers[self.road.start_lane];
        ensure(road.contains_lateral(ref_y), "road.start_lane", "lane center outside road")?;
        Ok(())
    }

    /// Set a numeric parameter by dotted path (sweep support).
    pub fn set_param(&mut self, path: &str, value: f64) -> Result<(), ConfigError> {
        match path {
            "speed_kmh" => self.speed_kmh = value,
            "duration" => self.duration = value,
            "seed" => self.seed = value as u64,
            "planner.weights.q_track" => self.planner.weights.q_track = value,
            "planner.weights.s_obstacle" => self.planner.weights.s_obstacle = value,
            "planner.weights.l_road" => self.planner.weights.l_road = value,
            "planner.weights.r_confidence" => self.planner.weights.r_confidence = value,
            "planner.horizon_t" => self.planner.horizon_t = value,
            "planner.dt" => self.planner.dt = value,
            "planner.transition_length_gain" => self.planner.transition_length_gain = value,
            "planner.clearance_margin" => self.planner.clearance_margin = value,
            "planner.replan_period" => self.planner.replan_period = value,
            "tracker.q_y" => self.tracker.q_y = value,
            "tracker.q_psi" => self.tracker.q_psi = value,
            "tracker.r_du" => self.tracker.r_du = value,
            "tracker.rho_slack" => self.tracker.rho_slack = value,
            "fields.obstacle.weight_s" => self.fields.obstacle.weight_s = value,
            "fields.obstacle.sigma_x0" => self.fields.obstacle.sigma_x0 = value,
            "fields.obstacle.sigma_y" => self.fields.obstacle.sigma_y = value,
            "fields.obstacle.speed_gain_kv" => self.fields.obstacle.speed_gain_kv = value,
            "fields.road.weight_l" => self.fields.road.weight_l = value,
            "fields.road.sigma_b" => self.fields.road.sigma_b = value,
            _ => {
                return Err(err(
                    path,
                    "unknown sweep parameter; supported: speed_kmh, duration, seed, \
                     planner.weights.*, planner.{horizon_t,dt,transition_length_gain,\
                     clearance_margin,replan_period}, tracker.{q_y,q_psi,r_du,rho_slack}, \
                     fields.obstacle.*, fields.road.*",
                ))
            }
        }
        self.validate()
    }
}
