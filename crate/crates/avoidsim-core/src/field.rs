//! Artificial potential fields for obstacles and road boundaries.
//!
//! Both fields are Gaussian: bounded, smooth, with analytic gradients. The
//! obstacle field widens longitudinally with the relative speed, so faster
//! approaches feel pressure earlier; lateral spread stays geometric.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FieldError {
    #[error("road geometry invalid: {0}")]
    BadRoad(&'static str),
}

/// Axis-aligned rectangular obstacle, optionally moving along +x.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    /// Center position, m.
    pub xo: f64,
    pub yo: f64,
    /// Half extents, m.
    pub half_length: f64,
    pub half_width: f64,
    /// Speed along +x, m/s (0 for static).
    #[serde(default)]
    pub speed: f64,
}

impl Obstacle {
    /// Obstacle advanced along +x by its own speed for `t` seconds.
    pub fn at_time(&self, t: f64) -> Obstacle {
        Obstacle { xo: self.xo + self.speed * t, ..*self }
    }

    /// Euclidean distance from a point to the obstacle rectangle (0 inside).
    pub fn distance_to(&self, px: f64, py: f64) -> f64 {
        let dx = ((px - self.xo).abs() - self.half_length).max(0.0);
        let dy = ((py - self.yo).abs() - self.half_width).max(0.0);
        dx.hypot(dy)
    }
}

/// Straight multi-lane road along +x.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadGeometry {
    pub lane_width: f64,
    pub num_lanes: usize,
    /// Boundary lateral positions, strictly increasing; num_lanes + 1 entries.
    pub y_boundaries: Vec<f64>,
    /// Lane centers, midway between adjacent boundaries.
    pub lane_centers: Vec<f64>,
}

impl RoadGeometry {
    /// Uniform-width road with the first boundary at `y_min`.
    pub fn new(lane_width: f64, num_lanes: usize, y_min: f64) -> Result<Self, FieldError> {
        if lane_width <= 0.0 {
            return Err(FieldError::BadRoad("lane_width must be > 0"));
        }
        if num_lanes == 0 {
            return Err(FieldError::BadRoad("num_lanes must be >= 1"));
        }
        let y_boundaries: Vec<f64> =
            (0..=num_lanes).map(|i| y_min + i as f64 * lane_width).collect();
        let lane_centers = y_boundaries.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        Ok(Self { lane_width, num_lanes, y_boundaries, lane_centers })
    }

    pub fn y_min(&self) -> f64 {
        self.y_boundaries[0]
    }

    pub fn y_max(&self) -> f64 {
        *self.y_boundaries.last().unwrap()
    }

    pub fn contains_lateral(&self, y: f64) -> bool {
        y > self.y_min() && y < self.y_max()
    }
}

/// Obstacle field shape: peak value, spreads, and the relative-speed
/// coupling on the longitudinal spread.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObstacleFieldParams {
    /// Peak value (the obstacle weight S when used standalone).
    pub weight_s: f64,
    /// Longitudinal spread at zero relative speed, m.
    pub sigma_x0: f64,
    /// Lateral spread, m.
    pub sigma_y: f64,
    /// Longitudinal spread gain per m/s of relative speed, s.
    pub speed_gain_kv: f64,
}

impl Default for ObstacleFieldParams {
    fn default() -> Self {
        // Influence horizon at 30 km/h on the order of the 8.65 m
        // last-point-to-steer distance.
        Self { weight_s: 1.0, sigma_x0: 6.0, sigma_y: 1.2, speed_gain_kv: 0.6 }
    }
}

impl ObstacleFieldParams {
    pub fn with_unit_weight(&self) -> Self {
        Self { weight_s: 1.0, ..*self }
    }
}

/// Road boundary field shape.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoadFieldParams {
    /// Ridge height (the road weight L when used standalone).
    pub weight_l: f64,
    /// Boundary ridge spread, m.
    pub sigma_b: f64,
}

impl Default for RoadFieldParams {
    fn default() -> Self {
        Self { weight_l: 1.0, sigma_b: 0.8 }
    }
}

impl RoadFieldParams {
    pub fn with_unit_weight(&self) -> Self {
        Self { weight_l: 1.0, ..*self }
    }
}

/// Psychological pressure from one obstacle at a point:
/// U = S exp(-(dx^2 / 2 sigma_x^2 + dy^2 / 2 sigma_y^2)) with
/// sigma_x = sigma_x0 + kv |ego_speed - obstacle speed|.
pub fn obstacle_potential(
    px: f64,
    py: f64,
    ego_speed: f64,
    obs: &Obstacle,
    params: &ObstacleFieldParams,
) -> f64 {
    let sigma_x = params.sigma_x0 + params.speed_gain_kv * (ego_speed - obs.speed).abs();
    let dx = px - obs.xo;
    let dy = py - obs.yo;
    params.weight_s
        * (-(dx * dx / (2.0 * sigma_x * sigma_x) + dy * dy / (2.0 * params.sigma_y * params.sigma_y)))
            .exp()
}

/// Psychological pressure from the road boundaries at a lateral position:
/// U = L sum_b exp(-(py - y_b)^2 / 2 sigma_b^2).
pub fn road_potential(py: f64, road: &RoadGeometry, params: &RoadFieldParams) -> f64 {
    params.weight_l
        * road
            .y_boundaries
            .iter()
            .map(|yb| {
                let d = py - yb;
                (-d * d / (2.0 * params.sigma_b * params.sigma_b)).exp()
            })
            .sum::<f64>()
}

/// Total field (all obstacles plus road) at a point.
pub fn total_potential(
    px: f64,
    py: f64,
    ego_speed: f64,
    obstacles: &[Obstacle],
    road: &RoadGeometry,
    oparams: &ObstacleFieldParams,
    rparams: &RoadFieldParams,
) -> f64 {
    obstacles
        .iter()
        .map(|o| obstacle_potential(px, py, ego_speed, o, oparams))
        .sum::<f64>()
        + road_potential(py, road, rparams)
}

/// Analytic gradient of the total field.
pub fn field_gradient(
    px: f64,
    py: f64,
    ego_speed: f64,
    obstacles: &[Obstacle],
    road: &RoadGeometry,
    oparams: &ObstacleFieldParams,
    rparams: &RoadFieldParams,
) -> (f64, f64) {
    let mut gx = 0.0;
    let mut gy = 0.0;
    for obs in obstacles {
        let sigma_x = oparams.sigma_x0 + oparams.speed_gain_kv * (ego_speed - obs.speed).abs();
        let u = obstacle_potential(px, py, ego_speed, obs, oparams);
        gx += u * -(px - obs.xo) / (sigma_x * sigma_x);
        gy += u * -(py - obs.yo) / (oparams.sigma_y * oparams.sigma_y);
    }
    for yb in &road.y_boundaries {
        let d = py - yb;
        let u = rparams.weight_l * (-d * d / (2.0 * rparams.sigma_b * rparams.sigma_b)).exp();
        gy += u * -d / (rparams.sigma_b * rparams.sigma_b);
    }
    (gx, gy)
}
