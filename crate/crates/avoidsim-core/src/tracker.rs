//! Receding-horizon path tracking.
//!
//! Each step linearizes the vehicle model at the current state (held
//! constant over the horizon), condenses a control-increment QP with one
//! shared slack variable, solves it with the active-set solver, and applies
//! the first increment. Input magnitude and rate limits are hard; sideslip,
//! lateral acceleration, and yaw-rate envelopes are soft through the slack.

use crate::qp::{solve_qp, QpError, QpProblem, QpStatus, SolveOptions};
use crate::vehicle::{
    euler_step_raw, linearize, wrap_angle, ControlInput, VehicleError, VehicleParams, VehicleState,
};
use nalgebra::{DMatrix, DVector, SVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrackerError {
    #[error("reference path invalid: {0}")]
    BadPath(&'static str),
    #[error("tracker config invalid: {0}")]
    BadConfig(&'static str),
    #[error(transparent)]
    Vehicle(#[from] VehicleError),
    #[error(transparent)]
    Qp(#[from] QpError),
}

/// Hard input limits and soft state envelopes.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerBounds {
    /// Steering magnitude, rad.
    pub delta: f64,
    /// Steering change per step, rad.
    pub ddelta_per_step: f64,
    /// Sideslip envelope, rad.
    pub beta: f64,
    /// Lateral acceleration envelope, m/s^2.
    pub a_lat: f64,
    /// Yaw rate envelope, rad/s.
    pub yaw_rate: f64,
}

impl Default for TrackerBounds {
    fn default() -> Self {
        Self { delta: 0.5, ddelta_per_step: 0.016, beta: 0.1, a_lat: 4.0, yaw_rate: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Prediction horizon, steps.
    pub np: usize,
    /// Control horizon, steps.
    pub nc: usize,
    /// Sample time, s.
    pub dt: f64,
    /// Lateral-error weight.
    pub q_y: f64,
    /// Heading-error weight.
    pub q_psi: f64,
    /// Increment weight.
    pub r_du: f64,
    /// Slack penalty.
    pub rho_slack: f64,
    pub bounds: TrackerBounds,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            np: 25,
            nc: 5,
            dt: 0.02,
            q_y: 100.0,
            q_psi: 10.0,
            r_du: 5000.0,
            rho_slack: 1000.0,
            bounds: TrackerBounds::default(),
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), TrackerError> {
        if !(1 <= self.nc && self.nc <= self.np) {
            return Err(TrackerError::BadConfig("need 1 <= nc <= np"));
        }
        if self.dt <= 0.0 {
            return Err(TrackerError::BadConfig("dt must be > 0"));
        }
        if self.q_y < 0.0 || self.q_psi < 0.0 || self.r_du < 0.0 {
            return Err(TrackerError::BadConfig("weights must be >= 0"));
        }
        if self.rho_slack <= 0.0 {
            return Err(TrackerError::BadConfig("rho_slack must be > 0"));
        }
        let b = &self.bounds;
        if b.delta <= 0.0
            || b.ddelta_per_step <= 0.0
            || b.beta <= 0.0
            || b.a_lat <= 0.0
            || b.yaw_rate <= 0.0
        {
            return Err(TrackerError::BadConfig("bounds must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub v: f64,
}

/// Sampled reference path with cumulative arc length.
#[derive(Debug, Clone)]
pub struct ReferencePath {
    samples: Vec<PathSample>,
    arc_length: Vec<f64>,
}

impl ReferencePath {
    pub fn new(samples: Vec<PathSample>) -> Result<Self, TrackerError> {
        if samples.is_empty() {
            return Err(TrackerError::BadPath("empty path"));
        }
        let mut arc_length = Vec::with_capacity(samples.len());
        arc_length.push(0.0);
        for w in samples.windows(2) {
            let ds = (w[1].x - w[0].x).hypot(w[1].y - w[0].y);
            if ds <= 0.0 {
                return Err(TrackerError::BadPath("arc length must be strictly increasing"));
            }
            let chord = (w[1].y - w[0].y).atan2(w[1].x - w[0].x);
            if wrap_angle(w[0].psi - chord).abs() > 0.2 {
                return Err(TrackerError::BadPath("heading inconsistent with positions"));
            }
            arc_length.push(arc_length.last().unwrap() + ds);
        }
        Ok(Self { samples, arc_length })
    }

    /// Straight path along +x at a fixed lateral position.
    pub fn straight(y: f64, x_start: f64, length: f64, v: f64, spacing: f64) -> Self {
        let n = (length / spacing).ceil() as usize + 1;
        let samples = (0..n)
            .map(|i| PathSample { x: x_start + i as f64 * spacing, y, psi: 0.0, v })
            .collect();
        Self::new(samples).expect("straight path is always valid")
    }

    pub fn samples(&self) -> &[PathSample] {
        &self.samples
    }

    pub fn arc_length(&self) -> &[f64] {
        &self.arc_length
    }

    pub fn total_length(&self) -> f64 {
        *self.arc_length.last().unwrap()
    }

    /// (y, psi) linearly interpolated at an arc-length station, clamped to
    /// the path ends. Heading interpolation unwraps across +-pi.
    pub fn interpolate_at(&self, s: f64) -> (f64, f64) {
        let n = self.samples.len();
        if s <= 0.0 || n == 1 {
            return (self.samples[0].y, self.samples[0].psi);
        }
        if s >= self.total_length() {
            let last = &self.samples[n - 1];
            return (last.y, last.psi);
        }
        let mut hi = 1;
        while self.arc_length[hi] < s {
            hi += 1;
        }
        let lo = hi - 1;
        let t = (s - self.arc_length[lo]) / (self.arc_length[hi] - self.arc_length[lo]);
        let a = &self.samples[lo];
        let b = &self.samples[hi];
        let dpsi = wrap_angle(b.psi - a.psi);
        (a.y + t * (b.y - a.y), a.psi + t * dpsi)
    }
}

/// Closest sample index plus signed lateral error (+ left of path) and
/// wrapped heading error.
pub fn nearest_reference(state: &VehicleState, path: &ReferencePath) -> (usize, f64, f64) {
    let mut best = 0;
    let mut best_d2 = f64::INFINITY;
    for (i, s) in path.samples.iter().enumerate() {
        let d2 = (state.x - s.x).powi(2) + (state.y - s.y).powi(2);
        if d2 < best_d2 {
            best_d2 = d2;
            best = i;
        }
    }
    let s = &path.samples[best];
    let (ty, tx) = s.psi.sin_cos();
    let (ex, ey) = (state.x - s.x, state.y - s.y);
    let lateral_error = tx * ey - ty * ex;
    let heading_error = wrap_angle(state.psi - s.psi);
    (best, lateral_error, heading_error)
}

/// Condensed prediction: base rollout under the held input plus
/// sensitivities of each predicted state to each increment.
struct Prediction {
    base: Vec<SVector<f64, 6>>,
    /// sens[k][j] = d state_k / d delta_u_j.
    sens: Vec<Vec<SVector<f64, 6>>>,
}

fn predict(
    state: &VehicleState,
    params: &VehicleParams,
    cfg: &TrackerConfig,
    u_prev: f64,
) -> Result<Prediction, TrackerError> {
    let (a, b) = linearize(state, &ControlInput::new(u_prev), params, cfg.dt)?;
    // Affine offset of the frozen model: z+ = A z + B u + c.
    let z0 = SVector::<f64, 6>::from([state.x, state.y, state.psi, state.vx, state.vy, state.r]);
    let znext = euler_step_raw(state, &ControlInput::new(u_prev), params, cfg.dt);
    let c = znext - a * z0 - b * u_prev;

    let mut base = Vec::with_capacity(cfg.np + 1);
    base.push(z0);
    let mut sens = vec![vec![SVector::<f64, 6>::zeros(); cfg.nc]; cfg.np + 1];
    for k in 0..cfg.np {
        base.push(a * base[k] + b * u_prev + c);
        for j in 0..cfg.nc {
            let mut g = a * sens[k][j];
            if j <= k {
                g += b;
            }
            sens[k + 1][j] = g;
        }
    }
    Ok(Prediction { base, sens })
}

/// Linear output map w' z + d u for one soft-constrained quantity.
struct SoftRow {
    w: SVector<f64, 6>,
    d: f64,
    bound: f64,
}

fn soft_rows(state: &VehicleState, params: &VehicleParams, bounds: &TrackerBounds) -> [SoftRow; 3] {
    let vx = state.vx;
    // Sideslip ~ vy / vx for small angles.
    let mut w_beta = SVector::<f64, 6>::zeros();
    w_beta[4] = 1.0 / vx;
    // a_lat = vy_dot + vx r is linear in (vy, r, u).
    let a_vv = -(params.cf + params.cr) / (params.mass * vx);
    let cs = params.lr * params.cr - params.lf * params.cf;
    let mut w_alat = SVector::<f64, 6>::zeros();
    w_alat[4] = a_vv;
    w_alat[5] = cs / (params.mass * vx);
    let d_alat = params.cf / params.mass;
    let mut w_r = SVector::<f64, 6>::zeros();
    w_r[5] = 1.0;
    [
        SoftRow { w: w_beta, d: 0.0, bound: bounds.beta },
        SoftRow { w: w_alat, d: d_alat, bound: bounds.a_lat },
        SoftRow { w: w_r, d: 0.0, bound: bounds.yaw_rate },
    ]
}

/// Condense the tracking problem into a QP over (delta_u_0.., epsilon).
///
/// The constant term carries the held-input rollout cost, so the QP
/// objective at zero increments equals a direct rollout of the frozen
/// linear model.
pub fn build_tracking_qp(
    state: &VehicleState,
    path: &ReferencePath,
    params: &VehicleParams,
    cfg: &TrackerConfig,
    u_prev: &ControlInput,
) -> Result<QpProblem, TrackerError> {
    cfg.validate()?;
    let np = cfg.np;
    let nc = cfg.nc;
    let n = nc + 1;
    let pred = predict(state, params, cfg, u_prev.delta_f)?;

    // Reference stations ahead of the nearest point, matched by arc length.
    let (idx, _, _) = nearest_reference(state, path);
    let s0 = path.arc_length[idx];
    let refs: Vec<(f64, f64)> = (1..=np)
        .map(|k| path.interpolate_at(s0 + k as f64 * state.vx * cfg.dt))
        .collect();

    let mut h = DMatrix::zeros(n, n);
    let mut f = DVector::zeros(n);
    let mut c0 = 0.0;
    for k in 1..=np {
        let (y_ref, psi_ref_raw) = refs[k - 1];
        // Keep the heading error continuous around +-pi.
        let psi_ref = state.psi + wrap_angle(psi_ref_raw - state.psi);
        for (weight, row, target) in [(cfg.q_y, 1usize, y_ref), (cfg.q_psi, 2usize, psi_ref)] {
            if weight == 0.0 {
                continue;
            }
            let e0 = pred.base[k][row] - target;
            c0 += weight * e0 * e0;
            for j in 0..nc {
                let sj = pred.sens[k][j][row];
                f[j] += 2.0 * weight * e0 * sj;
                for l in 0..nc {
                    h[(j, l)] += 2.0 * weight * sj * pred.sens[k][l][row];
                }
            }
        }
    }
    for j in 0..nc {
        h[(j, j)] += 2.0 * cfg.r_du;
    }
    h[(nc, nc)] = 2.0 * cfg.rho_slack;

    // Hard rows: cumulative input bounds, then per-step rate bounds.
    let m = 4 * nc + 6 * np;
    let mut a = DMatrix::zeros(m, n);
    let mut b = DVector::zeros(m);
    let mut row = 0;
    for i in 0..nc {
        for j in 0..=i {
            a[(row, j)] = 1.0;
            a[(row + 1, j)] = -1.0;
        }
        b[row] = cfg.bounds.delta - u_prev.delta_f;
        b[row + 1] = cfg.bounds.delta + u_prev.delta_f;
        row += 2;
    }
    for i in 0..nc {
        a[(row, i)] = 1.0;
        b[row] = cfg.bounds.ddelta_per_step;
        a[(row + 1, i)] = -1.0;
        b[row + 1] = cfg.bounds.ddelta_per_step;
        row += 2;
    }

    // Soft rows: |quantity_k| <= bound + epsilon at every horizon step.
    let soft = soft_rows(state, params, &cfg.bounds);
    for k in 1..=np {
        for sr in &soft {
            let q0 = sr.w.dot(&pred.base[k]) + sr.d * u_prev.delta_f;
            for sign in [1.0, -1.0] {
                for j in 0..nc {
                    let du_gain = if j < k { sr.d } else { 0.0 };
                    a[(row, j)] = sign * (sr.w.dot(&pred.sens[k][j]) + du_gain);
                }
                a[(row, nc)] = -1.0;
                b[row] = sr.bound - sign * q0;
                row += 1;
            }
        }
    }
    debug_assert_eq!(row, m);

    Ok(QpProblem::new(h, f, a, b)?.with_constant(c0))
}

#[derive(Debug, Clone)]
pub struct TrackDiagnostics {
    pub lateral_error: f64,
    pub heading_error: f64,
    pub solver_status: QpStatus,
    pub epsilon: f64,
}

/// One receding-horizon step: solve the condensed QP from a feasible start
/// and apply the first increment, clamped to the hard limits. On solver
/// failure the previous input is held.
pub fn track_step(
    state: &VehicleState,
    path: &ReferencePath,
    params: &VehicleParams,
    cfg: &TrackerConfig,
    u_prev: &ControlInput,
) -> Result<(ControlInput, TrackDiagnostics), TrackerError> {
    let qp = build_tracking_qp(state, path, params, cfg, u_prev)?;
    // delta_u = 0 with just enough slack is always feasible: with zero
    // increments only the soft rows can bind, and each carries -1 on the
    // slack column.
    let (_, b) = qp.constraints();
    let n = qp.num_vars();
    let mut eps0 = 0.0f64;
    for i in 4 * cfg.nc..b.len() {
        eps0 = eps0.max(-b[i]);
    }
    let mut x0 = DVector::zeros(n);
    x0[n - 1] = eps0 * (1.0 + 1e-9) + 1e-12;

    let sol = solve_qp(&qp, &SolveOptions { x0: Some(x0), ..Default::default() })?;
    let (_, lateral_error, heading_error) = nearest_reference(state, path);
    let (u, epsilon) = if sol.status == QpStatus::Optimal {
        let du = sol.x[0].clamp(-cfg.bounds.ddelta_per_step, cfg.bounds.ddelta_per_step);
        let u = (u_prev.delta_f + du).clamp(-cfg.bounds.delta, cfg.bounds.delta);
        (u, sol.x[n - 1])
    } else {
        (u_prev.delta_f, f64::NAN)
    };
    Ok((
        ControlInput::new(u),
        TrackDiagnostics { lateral_error, heading_error, solver_status: sol.status, epsilon },
    ))
}
