//! Receding-horizon local path planning.
//!
//! Candidates are lateral-offset rollouts: a quintic blend (zero slope and
//! curvature at both ends) from the current lateral position to each target
//! offset, traversed at constant speed. Each candidate is scored by
//! tracking deviation, obstacle field, road field, and the comfort
//! confidence term; collision clearance and the psychological
//! last-point-to-steer distance act as feasibility filters before the
//! cost compares.

use crate::comfort::{classify, confidence_score, ClassifierModel, ComfortClass};
use crate::field::{
    obstacle_potential, road_potential, Obstacle, ObstacleFieldParams, RoadFieldParams,
    RoadGeometry,
};
use crate::vehicle::{differentiate, FeatureVector, VehicleState};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PlannerError {
    #[error("planner config invalid: {0}")]
    BadConfig(&'static str),
    #[error("last-point-to-steer table invalid: {0}")]
    BadTable(&'static str),
    #[error("speed must be positive, got {0} km/h")]
    NonPositiveSpeed(f64),
}

/// Speed-indexed psychological last-point-to-steer distances.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlptsTable {
    /// (speed km/h, distance m), strictly increasing in both.
    anchors: Vec<(f64, f64)>,
}

impl Default for PlptsTable {
    fn default() -> Self {
        Self { anchors: vec![(10.0, 7.67), (30.0, 8.65), (60.0, 15.27), (80.0, 18.15)] }
    }
}

impl PlptsTable {
    pub fn new(anchors: Vec<(f64, f64)>) -> Result<Self, PlannerError> {
        if anchors.len() < 2 {
            return Err(PlannerError::BadTable("need at least two anchors"));
        }
        for w in anchors.windows(2) {
            if w[1].0 <= w[0].0 || w[1].1 <= w[0].1 {
                return Err(PlannerError::BadTable("speeds and distances must strictly increase"));
            }
        }
        Ok(Self { anchors })
    }

    pub fn anchors(&self) -> &[(f64, f64)] {
        &self.anchors
    }
}

/// Minimum distance to an obstacle by which evasive steering must begin,
/// piecewise-linear in speed and clamped at the table ends.
pub fn plpts_distance(speed_kmh: f64, table: &PlptsTable) -> Result<f64, PlannerError> {
    if speed_kmh <= 0.0 {
        return Err(PlannerError::NonPositiveSpeed(speed_kmh));
    }
    let a = &table.anchors;
    if speed_kmh <= a[0].0 {
        return Ok(a[0].1);
    }
    if speed_kmh >= a[a.len() - 1].0 {
        return Ok(a[a.len() - 1].1);
    }
    let hi = a.iter().position(|(s, _)| *s >= speed_kmh).unwrap();
    let (s0, d0) = a[hi - 1];
    let (s1, d1) = a[hi];
    Ok(d0 + (d1 - d0) * (speed_kmh - s0) / (s1 - s0))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerWeights {
    /// Tracking-deviation weight (Q).
    pub q_track: f64,
    /// Obstacle-field weight (S).
    pub s_obstacle: f64,
    /// Road-field weight (L).
    pub l_road: f64,
    /// Confidence-term weight (R).
    pub r_confidence: f64,
}

impl Default for PlannerWeights {
    fn default() -> Self {
        Self { q_track: 1.0, s_obstacle: 20.0, l_road: 1.0, r_confidence: 0.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    /// Rollout horizon, s.
    pub horizon_t: f64,
    /// Rollout sample time, s.
    pub dt: f64,
    pub weights: PlannerWeights,
    /// Candidate target offsets from the reference lane center, m.
    pub lateral_offsets: Vec<f64>,
    /// Lateral transition length = gain * plpts_distance(v).
    pub transition_length_gain: f64,
    /// Required body-to-obstacle clearance on feasible rollouts, m.
    pub clearance_margin: f64,
    /// Replan period, s.
    pub replan_period: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            horizon_t: 3.0,
            dt: 0.1,
            weights: PlannerWeights::default(),
            lateral_offsets: vec![-3.5, -1.75, 0.0, 1.75, 3.5],
            transition_length_gain: 1.5,
            clearance_margin: 0.5,
            replan_period: 0.2,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), PlannerError> {
        if self.horizon_t <= 0.0 || self.dt <= 0.0 || self.horizon_t < self.dt {
            return Err(PlannerError::BadConfig("need horizon_t >= dt > 0"));
        }
        if self.rollout_len() < 3 {
            return Err(PlannerError::BadConfig("horizon must span at least 3 rollout steps"));
        }
        let w = &self.weights;
        if w.q_track < 0.0 || w.s_obstacle < 0.0 || w.l_road < 0.0 || w.r_confidence < 0.0 {
            return Err(PlannerError::BadConfig("weights must be >= 0"));
        }
        if self.lateral_offsets.is_empty() || !self.lateral_offsets.contains(&0.0) {
            return Err(PlannerError::BadConfig("lateral_offsets must include 0"));
        }
        if self.transition_length_gain <= 0.0 {
            return Err(PlannerError::BadConfig("transition_length_gain must be > 0"));
        }
        if self.clearance_margin < 0.0 {
            return Err(PlannerError::BadConfig("clearance_margin must be >= 0"));
        }
        if self.replan_period <= 0.0 {
            return Err(PlannerError::BadConfig("replan_period must be > 0"));
        }
        Ok(())
    }

    pub fn rollout_len(&self) -> usize {
        (self.horizon_t / self.dt).round() as usize
    }
}

/// Rollout point: pose plus speed at one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanPoint {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    Feasible,
    /// Minimum body-to-obstacle clearance fell below the margin.
    Collision { min_clearance: f64 },
    /// Lateral deviation would begin closer to an obstacle than allowed.
    PlptsViolated { gap: f64, required: f64 },
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible)
    }
}

/// Where a candidate first leaves the reference lane, if it does.
#[derive(Debug, Clone, Copy)]
pub struct SteerOnset {
    /// Longitudinal position of the onset point, m.
    pub x: f64,
    /// Gap to the near face of the closest obstacle ahead, m.
    pub gap_to_obstacle: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct CandidatePath {
    /// Target offset from the reference lane center, m.
    pub target_offset: f64,
    pub states: Vec<PlanPoint>,
    pub features: Vec<FeatureVector>,
    pub feasible: Feasibility,
    /// Deviation onset relative to the reference lane (None when the
    /// rollout starts already off-lane or never deviates).
    pub onset: Option<SteerOnset>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown {
    pub j_track: f64,
    pub j_obstacle: f64,
    pub j_road: f64,
    pub j_confidence: f64,
    pub j_all: f64,
}

#[derive(Debug, Clone)]
pub struct PlanResult {
    pub chosen: CandidatePath,
    pub cost_breakdown: CostBreakdown,
    pub per_point_class: Vec<ComfortClass>,
}

/// Local planner bound to a scenario's reference lane and ego geometry.
#[derive(Debug, Clone)]
pub struct LocalPlanner {
    pub cfg: PlannerConfig,
    pub table: PlptsTable,
    /// Reference lane center the offsets are measured from, m.
    pub ref_lane_y: f64,
    /// Ego half-width used to inflate obstacle rectangles, m.
    pub vehicle_half_width: f64,
}

/// Deviation threshold for the steering-onset detector, m.
const ONSET_THRESHOLD: f64 = 0.05;

impl LocalPlanner {
    pub fn new(
        cfg: PlannerConfig,
        table: PlptsTable,
        ref_lane_y: f64,
        vehicle_half_width: f64,
    ) -> Result<Self, PlannerError> {
        cfg.validate()?;
        if vehicle_half_width <= 0.0 {
            return Err(PlannerError::BadConfig("vehicle_half_width must be > 0"));
        }
        Ok(Self { cfg, table, ref_lane_y, vehicle_half_width })
    }

    /// Quintic blend with zero slope and curvature at both ends.
    fn blend(t: f64) -> f64 {
        let t = t.clamp(0.0, 1.0);
        ((6.0 * t - 15.0) * t + 10.0) * t * t * t
    }

    fn blend_d1(t: f64) -> f64 {
        if !(0.0..=1.0).contains(&t) {
            return 0.0;
        }
        ((30.0 * t - 60.0) * t + 30.0) * t * t
    }

    fn blend_d2(t: f64) -> f64 {
        if !(0.0..=1.0).contains(&t) {
            return 0.0;
        }
        ((120.0 * t - 180.0) * t + 60.0) * t
    }

    /// One candidate per configured offset whose target stays inside the
    /// road. Offsets that leave the road are dropped, not errored.
    pub fn generate_candidates(
        &self,
        state: &VehicleState,
        road: &RoadGeometry,
    ) -> Result<Vec<CandidatePath>, PlannerError> {
        let v = state.vx;
        let plpts = plpts_distance(v * 3.6, &self.table)?;
        let transition_len = self.cfg.transition_length_gain * plpts;
        let n = self.cfg.rollout_len();
        let ds = v * self.cfg.dt;

        let mut out = Vec::new();
        for &offset in &self.cfg.lateral_offsets {
            let y_target = self.ref_lane_y + offset;
            if !road.contains_lateral(y_target) {
                continue;
            }
            let y0 = state.y;
            let dy_total = y_target - y0;
            let mut states = Vec::with_capacity(n);
            let mut curvature = Vec::with_capacity(n);
            for i in 0..n {
                let s = i as f64 * ds;
                let t = s / transition_len;
                let y = y0 + dy_total * Self::blend(t);
                let slope = dy_total * Self::blend_d1(t) / transition_len;
                let y2 = dy_total * Self::blend_d2(t) / (transition_len * transition_len);
                let kappa = y2 / (1.0 + slope * slope).powf(1.5);
                states.push(PlanPoint { x: state.x + s, y, psi: slope.atan(), v });
                curvature.push(kappa);
            }
            // Indices: v_long, a_lat = v^2 k, yaw rate = v k, then the two
            // rates by finite differences over the rollout.
            let a_lat: Vec<f64> = curvature.iter().map(|k| v * v * k).collect();
            let yaw_rate: Vec<f64> = curvature.iter().map(|k| v * k).collect();
            let a_lat_rate = differentiate(&a_lat, self.cfg.dt);
            let yaw_accel = differentiate(&yaw_rate, self.cfg.dt);
            let features = (0..n)
                .map(|i| FeatureVector::new(v, a_lat[i], yaw_rate[i], a_lat_rate[i], yaw_accel[i]))
                .collect();
            out.push(CandidatePath {
                target_offset: offset,
                states,
                features,
                feasible: Feasibility::Feasible,
                onset: None,
            });
        }
        Ok(out)
    }

    /// Per-term costs of one candidate. The field shapes are evaluated at
    /// unit weight here; the planner weights S and L scale the aggregated
    /// integrals exactly once.
    pub fn evaluate_cost(
        &self,
        c: &CandidatePath,
        obstacles: &[Obstacle],
        road: &RoadGeometry,
        fields: &(ObstacleFieldParams, RoadFieldParams),
        model: &ClassifierModel,
    ) -> CostBreakdown {
        let unit_obs = fields.0.with_unit_weight();
        let unit_road = fields.1.with_unit_weight();
        let dt = self.cfg.dt;
        let mut j_track = 0.0;
        let mut j_obstacle = 0.0;
        let mut j_road = 0.0;
        let mut j_confidence = 0.0;
        for (i, p) in c.states.iter().enumerate() {
            let t = i as f64 * dt;
            j_track += (p.y - self.ref_lane_y).powi(2) * dt;
            for obs in obstacles {
                let moved = obs.at_time(t);
                j_obstacle += obstacle_potential(p.x, p.y, p.v, &moved, &unit_obs) * dt;
            }
            j_road += road_potential(p.y, road, &unit_road) * dt;
            j_confidence += (1.0 - confidence_score(model, &c.features[i])) * dt;
        }
        let w = &self.cfg.weights;
        let j_all = w.q_track * j_track
            + w.s_obstacle * j_obstacle
            + w.l_road * j_road
            + w.r_confidence * j_confidence;
        CostBreakdown { j_track, j_obstacle, j_road, j_confidence, j_all }
    }

    /// Minimum body-to-obstacle clearance along a rollout, extrapolating
    /// obstacles at their own speeds.
    fn min_clearance(&self, c: &CandidatePath, obstacles: &[Obstacle]) -> f64 {
        let mut min = f64::INFINITY;
        for (i, p) in c.states.iter().enumerate() {
            let t = i as f64 * self.cfg.dt;
            for obs in obstacles {
                let d = obs.at_time(t).distance_to(p.x, p.y) - self.vehicle_half_width;
                if d < min {
                    min = d;
                }
            }
        }
        min
    }

    /// Deviation onset: the first rollout point leaving the reference lane
    /// by more than the threshold, provided the rollout starts on-lane.
    fn steer_onset(&self, c: &CandidatePath, obstacles: &[Obstacle]) -> Option<SteerOnset> {
        let on_lane =
            |p: &PlanPoint| (p.y - self.ref_lane_y).abs() <= ONSET_THRESHOLD;
        if !on_lane(&c.states[0]) {
            return None;
        }
        let onset_idx = c.states.iter().position(|p| !on_lane(p))?;
        let x = c.states[onset_idx].x;
        let t = onset_idx as f64 * self.cfg.dt;
        let gap_to_obstacle = obstacles
            .iter()
            .map(|o| o.at_time(t))
            .filter(|o| o.xo > x)
            .map(|o| o.xo - o.half_length - x)
            .min_by(|a, b| a.partial_cmp(b).unwrap());
        Some(SteerOnset { x, gap_to_obstacle })
    }

    /// Full planning pass: feasibility filters, then the cost argmin.
    /// Ties break toward the smallest |offset|, then the leftmost. With no
    /// feasible candidate, the minimum-obstacle-cost one is returned
    /// flagged infeasible.
    pub fn plan(
        &self,
        state: &VehicleState,
        obstacles: &[Obstacle],
        road: &RoadGeometry,
        fields: &(ObstacleFieldParams, RoadFieldParams),
        model: &ClassifierModel,
    ) -> Result<PlanResult, PlannerError> {
        let v_kmh = state.vx * 3.6;
        let required = plpts_distance(v_kmh, &self.table)?;
        let mut candidates = self.generate_candidates(state, road)?;
        if candidates.is_empty() {
            return Err(PlannerError::BadConfig("no candidate targets the road interior"));
        }

        let mut scored: Vec<(usize, CostBreakdown)> = Vec::with_capacity(candidates.len());
        for (i, c) in candidates.iter_mut().enumerate() {
            let clearance = self.min_clearance(c, obstacles);
            c.onset = self.steer_onset(c, obstacles);
            if clearance < self.cfg.clearance_margin {
                c.feasible = Feasibility::Collision { min_clearance: clearance };
            } else if let Some(SteerOnset { gap_to_obstacle: Some(gap), .. }) = c.onset {
                if gap < required {
                    c.feasible = Feasibility::PlptsViolated { gap, required };
                }
            }
            let costs = self.evaluate_cost(c, obstacles, road, fields, model);
            scored.push((i, costs));
        }

        let pick = |pool: &[(usize, CostBreakdown)]| -> (usize, CostBreakdown) {
            let mut best = pool[0];
            for &(i, costs) in &pool[1..] {
                let (bi, bc) = (best.0, best.1);
                let a = &candidates[i];
                let b = &candidates[bi];
                let better = costs.j_all < bc.j_all
                    || (costs.j_all == bc.j_all
                        && (a.target_offset.abs() < b.target_offset.abs()
                            || (a.target_offset.abs() == b.target_offset.abs()
                                && a.target_offset > b.target_offset)));
                if better {
                    best = (i, costs);
                }
            }
            best
        };

        let feasible: Vec<(usize, CostBreakdown)> = scored
            .iter()
            .copied()
            .filter(|(i, _)| candidates[*i].feasible.is_feasible())
            .collect();
        let (chosen_idx, cost_breakdown) = if feasible.is_empty() {
            // Fall back to the least obstacle exposure, flagged as-is.
            *scored
                .iter()
                .min_by(|a, b| a.1.j_obstacle.partial_cmp(&b.1.j_obstacle).unwrap())
                .unwrap()
        } else {
            pick(&feasible)
        };

        let chosen = candidates.swap_remove(chosen_idx);
        let per_point_class = chosen.features.iter().map(|f| classify(model, f)).collect();
        Ok(PlanResult { chosen, cost_breakdown, per_point_class })
    }
}
