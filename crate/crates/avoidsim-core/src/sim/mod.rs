//! Closed-loop scenario simulation and comfort reporting.
//!
//! The loop runs the planner at its replan period, the tracker and plant at
//! the tracker sample time, and logs one row per plant step. Everything is
//! deterministic given the scenario config (the only randomness is the
//! seeded synthetic training data).

mod config;
mod logio;

pub use config::{ClassifierSpec, ConfigError, FieldsConfig, RoadConfig, ScenarioConfig};
pub use logio::{from_csv, read_csv, to_csv, write_csv, LogIoError, LOG_HEADER};

use crate::comfort::{
    classify, read_dataset, synth_dataset, train, ClassifierModel, ComfortClass, ComfortError,
    TrainOptions, NUM_CLASSES,
};
use crate::field::Obstacle;
use crate::planner::{Feasibility, LocalPlanner, PlannerError, PlptsTable, SteerOnset};
use crate::tracker::{track_step, PathSample, ReferencePath, TrackerError};
use crate::vehicle::{
    compute_features, lateral_acceleration, step_dynamic, ControlInput, VehicleError,
    VehicleState,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Comfort(#[from] ComfortError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Tracker(#[from] TrackerError),
    #[error(transparent)]
    Vehicle(#[from] VehicleError),
    #[error(transparent)]
    LogIo(#[from] LogIoError),
}

/// One record per plant step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub vx: f64,
    pub vy: f64,
    pub r: f64,
    pub delta_f: f64,
    pub a_lat: f64,
    pub beta: f64,
    pub plan_offset: f64,
    pub j_all: f64,
    pub comfort_class: ComfortClass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogMeta {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimLog {
    pub rows: Vec<LogRow>,
    pub meta: LogMeta,
}

impl SimLog {
    pub fn states_with_times(&self) -> Vec<(VehicleState, f64)> {
        self.rows
            .iter()
            .map(|r| (VehicleState::new(r.x, r.y, r.psi, r.vx, r.vy, r.r), r.t))
            .collect()
    }
}

/// One planner invocation, for diagnostics and acceptance checks.
#[derive(Debug, Clone)]
pub struct PlanEvent {
    pub t: f64,
    pub target_offset: f64,
    pub feasible: bool,
    pub j_all: f64,
    /// Deviation-onset gap to the nearest obstacle ahead, when the chosen
    /// candidate initiates one.
    pub onset_gap: Option<f64>,
    /// Last-point-to-steer distance required at this speed.
    pub required_gap: f64,
}

/// Side diagnostics of a run, not part of the CSV log.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub plan_events: Vec<PlanEvent>,
    /// Per-row body-to-obstacle clearance (infinite without obstacles).
    pub clearance: Vec<f64>,
    pub min_clearance: f64,
}

fn build_model(spec: &config::ClassifierSpec) -> Result<ClassifierModel, ComfortError> {
    let data = match &spec.data {
        Some(path) => read_dataset(path)?,
        None => synth_dataset(&spec.synth)?,
    };
    train(&data, spec.kind, &TrainOptions::default())
}

/// Run the closed loop and return the log plus side diagnostics.
pub fn run_scenario_traced(cfg: &ScenarioConfig) -> Result<(SimLog, RunTrace), SimError> {
    cfg.validate()?;
    let road = cfg.road.geometry()?;
    let ref_lane_y = road.lane_centers[cfg.road.start_lane];
    let model = build_model(&cfg.classifier)?;
    let planner = LocalPlanner::new(
        cfg.planner.clone(),
        PlptsTable::default(),
        ref_lane_y,
        cfg.vehicle.half_width,
    )?;
    let fields = (cfg.fields.obstacle, cfg.fields.road);

    let dt = cfg.tracker.dt;
    let steps = (cfg.duration / dt).round() as usize;
    let replan_steps = ((cfg.planner.replan_period / dt).round() as usize).max(1);
    let v = cfg.speed_kmh / 3.6;

    let mut state = VehicleState::cruising(0.0, ref_lane_y, v);
    let mut u = ControlInput::default();
    let mut rows: Vec<LogRow> = Vec::with_capacity(steps + 1);
    let mut trace =
        RunTrace { plan_events: Vec::new(), clearance: Vec::with_capacity(steps + 1), min_clearance: f64::INFINITY };
    let mut current_path: Option<ReferencePath> = None;
    let mut current_offset = 0.0;
    let mut current_j_all = 0.0;

    for k in 0..=steps {
        let t = k as f64 * dt;
        if k % replan_steps == 0 || current_path.is_none() {
            let obstacles_now: Vec<Obstacle> =
                cfg.obstacles.iter().map(|o| o.at_time(t)).collect();
            let plan = planner.plan(&state, &obstacles_now, &road, &fields, &model)?;
            let samples: Vec<PathSample> = plan
                .chosen
                .states
                .iter()
                .map(|p| PathSample { x: p.x, y: p.y, psi: p.psi, v: p.v })
                .collect();
            current_path = Some(ReferencePath::new(samples)?);
            current_offset = plan.chosen.target_offset;
            current_j_all = plan.cost_breakdown.j_all;
            let onset_gap = match plan.chosen.onset {
                Some(SteerOnset { gap_to_obstacle, .. }) => gap_to_obstacle,
                None => None,
            };
            let required_gap =
                crate::planner::plpts_distance(state.vx * 3.6, &planner.table)?;
            trace.plan_events.push(PlanEvent {
                t,
                target_offset: plan.chosen.target_offset,
                feasible: matches!(plan.chosen.feasible, Feasibility::Feasible),
                j_all: plan.cost_breakdown.j_all,
                onset_gap,
                required_gap,
            });
        }
        let path = current_path.as_ref().unwrap();
        let (u_next, _diag) = track_step(&state, path, &cfg.vehicle, &cfg.tracker, &u)?;
        u = u_next;

        let clearance = cfg
            .obstacles
            .iter()
            .map(|o| o.at_time(t).distance_to(state.x, state.y) - cfg.vehicle.half_width)
            .fold(f64::INFINITY, f64::min);
        trace.clearance.push(clearance);
        trace.min_clearance = trace.min_clearance.min(clearance);

        rows.push(LogRow {
            t,
            x: state.x,
            y: state.y,
            psi: state.psi,
            vx: state.vx,
            vy: state.vy,
            r: state.r,
            delta_f: u.delta_f,
            a_lat: lateral_acceleration(&state, &u, &cfg.vehicle),
            beta: state.sideslip(),
            plan_offset: current_offset,
            j_all: current_j_all,
            comfort_class: ComfortClass::Good, // filled below
        });

        if k < steps {
            state = step_dynamic(&state, &u, &cfg.vehicle, dt)?;
        }
    }

    // Per-step comfort labels from the completed trajectory.
    let states: Vec<(VehicleState, f64)> = rows
        .iter()
        .map(|r| (VehicleState::new(r.x, r.y, r.psi, r.vx, r.vy, r.r), r.t))
        .collect();
    let features = compute_features(&states)?;
    for (row, f) in rows.iter_mut().zip(&features) {
        row.comfort_class = classify(&model, f);
    }

    let log = SimLog {
        rows,
        meta: LogMeta {
            config_hash: cfg.hash(),
            seed: cfg.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
    };
    Ok((log, trace))
}

/// Run the closed loop; see [`run_scenario_traced`] for diagnostics.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<SimLog, SimError> {
    run_scenario_traced(cfg).map(|(log, _)| log)
}

/// Counts of good/normal/poor labels over a log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComfortReport {
    pub counts: [usize; NUM_CLASSES],
    pub total: usize,
}

impl ComfortReport {
    pub fn good(&self) -> usize {
        self.counts[0]
    }

    pub fn normal(&self) -> usize {
        self.counts[1]
    }

    pub fn poor(&self) -> usize {
        self.counts[2]
    }
}

/// Classify every log step through the model and count the labels.
pub fn comfort_report(log: &SimLog, model: &ClassifierModel) -> Result<ComfortReport, SimError> {
    let features = compute_features(&log.states_with_times())?;
    let mut counts = [0usize; NUM_CLASSES];
    for f in &features {
        counts[classify(model, f).index()] += 1;
    }
    Ok(ComfortReport { counts, total: features.len() })
}

/// Obstacle geometry for clearance columns in comparisons.
#[derive(Debug, Clone)]
pub struct CompareScene {
    pub obstacles: Vec<Obstacle>,
    pub vehicle_half_width: f64,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub report: ComfortReport,
    pub max_a_lat: f64,
    pub max_jerk: f64,
    pub min_clearance: Option<f64>,
    pub rows: usize,
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub a: RunSummary,
    pub b: RunSummary,
    /// Set when the two logs do not share scenario geometry (length, speed,
    /// start pose).
    pub geometry_warning: bool,
}

fn summarize(
    log: &SimLog,
    model: &ClassifierModel,
    scene: Option<&CompareScene>,
) -> Result<RunSummary, SimError> {
    let report = comfort_report(log, model)?;
    let features = compute_features(&log.states_with_times())?;
    let max_a_lat = log.rows.iter().map(|r| r.a_lat.abs()).fold(0.0, f64::max);
    let max_jerk = features.iter().map(|f| f.a_lat_rate.abs()).fold(0.0, f64::max);
    let min_clearance = scene.map(|s| {
        log.rows
            .iter()
            .map(|r| {
                s.obstacles
                    .iter()
                    .map(|o| o.at_time(r.t).distance_to(r.x, r.y) - s.vehicle_half_width)
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min)
    });
    Ok(RunSummary { report, max_a_lat, max_jerk, min_clearance, rows: log.rows.len() })
}

/// Side-by-side comparison of two runs of the same scenario geometry.
pub fn compare_runs(
    log_a: &SimLog,
    log_b: &SimLog,
    model: &ClassifierModel,
    scene: Option<&CompareScene>,
) -> Result<CompareReport, SimError> {
    let a = summarize(log_a, model, scene)?;
    let b = summarize(log_b, model, scene)?;
    let geometry_warning = log_a.rows.len() != log_b.rows.len()
        || log_a.rows.first().map(|r| (r.x, r.y, r.vx))
            != log_b.rows.first().map(|r| (r.x, r.y, r.vx));
    Ok(CompareReport { a, b, geometry_warning })
}

impl CompareReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if self.geometry_warning {
            out.push_str("warning: logs do not share scenario geometry\n");
        }
        out.push_str("run,good,normal,poor,total,max_a_lat,max_jerk,min_clearance,rows\n");
        for (name, s) in [("a", &self.a), ("b", &self.b)] {
            let clear = s
                .min_clearance
                .map(|c| format!("{c:.3}"))
                .unwrap_or_else(|| "n/a".into());
            out.push_str(&format!(
                "{name},{},{},{},{},{:.3},{:.3},{clear},{}\n",
                s.report.good(),
                s.report.normal(),
                s.report.poor(),
                s.report.total,
                s.max_a_lat,
                s.max_jerk,
                s.rows,
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_cfg() -> ScenarioConfig {
        let mut cfg = ScenarioConfig::default();
        cfg.duration = 4.0;
        cfg
    }

    #[test]
    fn empty_road_keeps_the_lane() {
        let cfg = quick_cfg();
        let log = run_scenario(&cfg).unwrap();
        assert_eq!(log.rows.len(), (cfg.duration / cfg.tracker.dt).round() as usize + 1);
        let y0 = log.rows[0].y;
        let y_end = log.rows.last().unwrap().y;
        assert!((y_end - y0).abs() < 0.05, "drifted {}", y_end - y0);
        // Uniform timestamps at the tracker rate.
        for (i, r) in log.rows.iter().enumerate() {
            assert!((r.t - i as f64 * cfg.tracker.dt).abs() < 1e-12);
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let cfg = quick_cfg();
        let a = to_csv(&run_scenario(&cfg).unwrap());
        let b = to_csv(&run_scenario(&cfg).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn straight_driving_is_all_good() {
        let cfg = quick_cfg();
        let log = run_scenario(&cfg).unwrap();
        let model = build_model(&cfg.classifier).unwrap();
        let report = comfort_report(&log, &model).unwrap();
        assert_eq!(report.good(), report.total);
        assert_eq!(report.counts.iter().sum::<usize>(), report.total);
        for r in &log.rows {
            assert_eq!(r.comfort_class, ComfortClass::Good);
        }
    }

    #[test]
    fn log_csv_roundtrip_equals_fieldwise() {
        let cfg = quick_cfg();
        let log = run_scenario(&cfg).unwrap();
        let back = from_csv(&to_csv(&log)).unwrap();
        assert_eq!(back.meta, log.meta);
        assert_eq!(back.rows.len(), log.rows.len());
        // Values are stored at 9 significant digits; the parsed form is a
        // fixed point of write/read.
        let again = from_csv(&to_csv(&back)).unwrap();
        assert_eq!(again, back);
    }

    #[test]
    fn compare_identical_logs() {
        let cfg = quick_cfg();
        let log = run_scenario(&cfg).unwrap();
        let model = build_model(&cfg.classifier).unwrap();
        let rep = compare_runs(&log, &log, &model, None).unwrap();
        assert!(!rep.geometry_warning);
        assert_eq!(rep.a.report, rep.b.report);
        assert_eq!(rep.a.rows, log.rows.len());
        let text = rep.to_text();
        assert!(text.contains("run,good,normal,poor"));
    }

    #[test]
    fn compare_flags_mismatched_geometry() {
        let cfg = quick_cfg();
        let log_a = run_scenario(&cfg).unwrap();
        let mut cfg_b = quick_cfg();
        cfg_b.speed_kmh = 40.0;
        cfg_b.duration = 3.0;
        let log_b = run_scenario(&cfg_b).unwrap();
        let model = build_model(&cfg.classifier).unwrap();
        let rep = compare_runs(&log_a, &log_b, &model, None).unwrap();
        assert!(rep.geometry_warning);
    }

    #[test]
    fn single_obstacle_run_avoids_and_returns() {
        let mut cfg = ScenarioConfig::default();
        cfg.duration = 16.0;
        cfg.obstacles.push(Obstacle {
            xo: 50.0,
            yo: 0.0,
            half_length: 1.0,
            half_width: 1.0,
            speed: 0.0,
        });
        let (log, trace) = run_scenario_traced(&cfg).unwrap();
        assert!(
            trace.min_clearance >= cfg.planner.clearance_margin,
            "clearance {}",
            trace.min_clearance
        );
        // Deviates to pass, then returns to the original lane.
        let max_y = log.rows.iter().map(|r| r.y.abs()).fold(0.0, f64::max);
        assert!(max_y > 1.5, "never deviated: {max_y}");
        let final_y = log.rows.last().unwrap().y;
        assert!(final_y.abs() < 0.1, "did not return to lane: {final_y}");
    }

    #[test]
    fn validation_failure_surfaces_field_path() {
        let mut cfg = quick_cfg();
        cfg.speed_kmh = 2.0;
        match run_scenario(&cfg) {
            Err(SimError::Config(e)) => assert_eq!(e.path, "speed_kmh"),
            other => panic!("expected config error, got {other:?}"),
        }
    }
}
