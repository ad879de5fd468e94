//! Single-track (bicycle) vehicle dynamics.
//!
//! Lateral dynamics are the classic linear single-track model at constant
//! longitudinal speed; the pose is integrated kinematically in the global
//! frame. Forward Euler with the tracker sample time keeps the discrete
//! linearization exact.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum longitudinal speed; the 1/vx terms blow up below this.
pub const MIN_VX: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum VehicleError {
    #[error("longitudinal speed {0} m/s is below the {MIN_VX} m/s floor")]
    SpeedTooLow(f64),
    #[error("time step {0} s outside (0, 0.1]")]
    BadTimeStep(f64),
    #[error("log too short for feature extraction (need >= 3 samples, got {0})")]
    LogTooShort(usize),
    #[error("log timestamps not uniform at index {0}")]
    NonUniformTimestamps(usize),
}

/// Global-frame pose plus body-frame velocities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    /// Position, m (global frame).
    pub x: f64,
    pub y: f64,
    /// Heading, rad, kept in (-pi, pi].
    pub psi: f64,
    /// Longitudinal speed, m/s (body frame).
    pub vx: f64,
    /// Lateral speed, m/s (body frame).
    pub vy: f64,
    /// Yaw rate, rad/s.
    pub r: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, psi: f64, vx: f64, vy: f64, r: f64) -> Self {
        Self { x, y, psi: wrap_angle(psi), vx, vy, r }
    }

    /// Straight-ahead state at a given position and speed.
    pub fn cruising(x: f64, y: f64, vx: f64) -> Self {
        Self { x, y, psi: 0.0, vx, vy: 0.0, r: 0.0 }
    }

    /// Sideslip angle beta = atan(vy/vx).
    pub fn sideslip(&self) -> f64 {
        (self.vy / self.vx).atan()
    }

    fn to_vector(self) -> SVector<f64, 6> {
        SVector::from([self.x, self.y, self.psi, self.vx, self.vy, self.r])
    }
}

/// Single-track model parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    /// Mass, kg.
    pub mass: f64,
    /// Yaw inertia, kg m^2.
    pub yaw_inertia: f64,
    /// CoG to front axle, m.
    pub lf: f64,
    /// CoG to rear axle, m.
    pub lr: f64,
    /// Front cornering stiffness, N/rad (positive).
    pub cf: f64,
    /// Rear cornering stiffness, N/rad (positive).
    pub cr: f64,
    /// Steering angle limit, rad.
    pub delta_max: f64,
    /// Steering rate limit, rad/s.
    pub ddelta_max: f64,
    /// Body half-width, m (collision checks).
    pub half_width: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        // Typical mid-size sedan.
        Self {
            mass: 1500.0,
            yaw_inertia: 2500.0,
            lf: 1.2,
            lr: 1.4,
            cf: 80_000.0,
            cr: 80_000.0,
            delta_max: 0.5,
            ddelta_max: 0.8,
            half_width: 0.9,
        }
    }
}

impl VehicleParams {
    /// Wheelbase, m.
    pub fn wheelbase(&self) -> f64 {
        self.lf + self.lr
    }

    /// Understeer gradient K = m (lr cr - lf cf) / (cf cr L).
    pub fn understeer_gradient(&self) -> f64 {
        self.mass * (self.lr * self.cr - self.lf * self.cf)
            / (self.cf * self.cr * self.wheelbase())
    }

    /// Steady-state steering angle on a radius-R arc at speed v:
    /// delta = (L + K v^2) / R.
    pub fn steady_steer_for_radius(&self, radius: f64, v: f64) -> f64 {
        (self.wheelbase() + self.understeer_gradient() * v * v) / radius
    }
}

/// Front wheel steering angle command, rad.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlInput {
    pub delta_f: f64,
}

impl ControlInput {
    pub fn new(delta_f: f64) -> Self {
        Self { delta_f }
    }
}

/// The five objective dynamics indices, in fixed order:
/// longitudinal speed, lateral acceleration, yaw rate, lateral jerk,
/// yaw acceleration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    /// m/s
    pub v_long: f64,
    /// m/s^2
    pub a_lat: f64,
    /// rad/s
    pub yaw_rate: f64,
    /// m/s^3 (lateral jerk)
    pub a_lat_rate: f64,
    /// rad/s^2
    pub yaw_accel: f64,
}

impl FeatureVector {
    pub fn new(v_long: f64, a_lat: f64, yaw_rate: f64, a_lat_rate: f64, yaw_accel: f64) -> Self {
        Self { v_long, a_lat, yaw_rate, a_lat_rate, yaw_accel }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.v_long, self.a_lat, self.yaw_rate, self.a_lat_rate, self.yaw_accel]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4])
    }
}

/// Wrap an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(std::f64::consts::TAU);
    if w > std::f64::consts::PI {
        w -= std::f64::consts::TAU;
    }
    w
}

fn check_step_pre(state: &VehicleState, dt: f64) -> Result<(), VehicleError> {
    if !(dt > 0.0 && dt <= 0.1) {
        return Err(VehicleError::BadTimeStep(dt));
    }
    if state.vx < MIN_VX {
        return Err(VehicleError::SpeedTooLow(state.vx));
    }
    Ok(())
}

/// Continuous-time state derivative of the single-track model.
fn derivative(state: &VehicleState, input: &ControlInput, p: &VehicleParams) -> SVector<f64, 6> {
    let (sp, cp) = state.psi.sin_cos();
    let vx = state.vx;
    let a_vv = -(p.cf + p.cr) / (p.mass * vx);
    let a_vr = (p.lr * p.cr - p.lf * p.cf) / (p.mass * vx) - vx;
    let b_v = p.cf / p.mass;
    let a_rv = (p.lr * p.cr - p.lf * p.cf) / (p.yaw_inertia * vx);
    let a_rr = -(p.lf * p.lf * p.cf + p.lr * p.lr * p.cr) / (p.yaw_inertia * vx);
    let b_r = p.lf * p.cf / p.yaw_inertia;
    SVector::from([
        vx * cp - state.vy * sp,
        vx * sp + state.vy * cp,
        state.r,
        0.0,
        a_vv * state.vy + a_vr * state.r + b_v * input.delta_f,
        a_rv * state.vy + a_rr * state.r + b_r * input.delta_f,
    ])
}

/// Body-frame lateral acceleration a_lat = vy_dot + vx r at the given
/// state and input, from the model equations.
pub fn lateral_acceleration(state: &VehicleState, input: &ControlInput, p: &VehicleParams) -> f64 {
    derivative(state, input, p)[4] + state.vx * state.r
}

/// One forward-Euler step without heading wrap; prediction code relies on
/// the unwrapped affine form.
pub(crate) fn euler_step_raw(
    state: &VehicleState,
    input: &ControlInput,
    p: &VehicleParams,
    dt: f64,
) -> SVector<f64, 6> {
    state.to_vector() + derivative(state, input, p) * dt
}

/// Forward-Euler successor state; heading normalized to (-pi, pi].
pub fn step_dynamic(
    state: &VehicleState,
    input: &ControlInput,
    params: &VehicleParams,
    dt: f64,
) -> Result<VehicleState, VehicleError> {
    check_step_pre(state, dt)?;
    let z = euler_step_raw(state, input, params, dt);
    Ok(VehicleState {
        x: z[0],
        y: z[1],
        psi: wrap_angle(z[2]),
        vx: z[3],
        vy: z[4],
        r: z[5],
    })
}

/// Discrete Jacobians (A, B) of [`step_dynamic`] at (state, input).
pub fn linearize(
    state: &VehicleState,
    _input: &ControlInput,
    p: &VehicleParams,
    dt: f64,
) -> Result<(SMatrix<f64, 6, 6>, SVector<f64, 6>), VehicleError> {
    check_step_pre(state, dt)?;
    let (sp, cp) = state.psi.sin_cos();
    let vx = state.vx;
    let vx2 = vx * vx;
    let cfr = p.cf + p.cr;
    let cs = p.lr * p.cr - p.lf * p.cf;
    let cq = p.lf * p.lf * p.cf + p.lr * p.lr * p.cr;

    let mut jac = SMatrix::<f64, 6, 6>::zeros();
    // x' = vx cos(psi) - vy sin(psi)
    jac[(0, 2)] = -vx * sp - state.vy * cp;
    jac[(0, 3)] = cp;
    jac[(0, 4)] = -sp;
    // y' = vx sin(psi) + vy cos(psi)
    jac[(1, 2)] = vx * cp - state.vy * sp;
    jac[(1, 3)] = sp;
    jac[(1, 4)] = cp;
    // psi' = r
    jac[(2, 5)] = 1.0;
    // vx' = 0
    // vy' = -(cf+cr)/(m vx) vy + (cs/(m vx) - vx) r + (cf/m) delta
    jac[(4, 3)] = cfr / (p.mass * vx2) * state.vy + (-cs / (p.mass * vx2) - 1.0) * state.r;
    jac[(4, 4)] = -cfr / (p.mass * vx);
    jac[(4, 5)] = cs / (p.mass * vx) - vx;
    // r' = cs/(Iz vx) vy - cq/(Iz vx) r + (lf cf/Iz) delta
    jac[(5, 3)] = -cs / (p.yaw_inertia * vx2) * state.vy + cq / (p.yaw_inertia * vx2) * state.r;
    jac[(5, 4)] = cs / (p.yaw_inertia * vx);
    jac[(5, 5)] = -cq / (p.yaw_inertia * vx);

    let a = SMatrix::<f64, 6, 6>::identity() + jac * dt;
    let b = SVector::from([0.0, 0.0, 0.0, 0.0, p.cf / p.mass * dt, p.lf * p.cf / p.yaw_inertia * dt]);
    Ok((a, b))
}

/// Numerical differentiator: central differences inside, second-order
/// one-sided at the ends, so the whole output is O(dt^2) accurate.
pub(crate) fn differentiate(series: &[f64], dt: f64) -> Vec<f64> {
    let n = series.len();
    debug_assert!(n >= 3);
    let mut out = Vec::with_capacity(n);
    out.push((-3.0 * series[0] + 4.0 * series[1] - series[2]) / (2.0 * dt));
    for i in 1..n - 1 {
        out.push((series[i + 1] - series[i - 1]) / (2.0 * dt));
    }
    out.push((3.0 * series[n - 1] - 4.0 * series[n - 2] + series[n - 3]) / (2.0 * dt));
    out
}

/// Extract the objective dynamics indices from a uniformly sampled state log.
///
/// One [`FeatureVector`] per sample; a_lat = vy_dot + vx r with vy_dot,
/// lateral jerk, and yaw acceleration by finite differences over the log.
pub fn compute_features(log: &[(VehicleState, f64)]) -> Result<Vec<FeatureVector>, VehicleError> {
    let n = log.len();
    if n < 3 {
        return Err(VehicleError::LogTooShort(n));
    }
    let dt = log[1].1 - log[0].1;
    if dt <= 0.0 {
        return Err(VehicleError::NonUniformTimestamps(1));
    }
    for i in 1..n {
        let step = log[i].1 - log[i - 1].1;
        if (step - dt).abs() > 1e-9 * dt.max(1.0) {
            return Err(VehicleError::NonUniformTimestamps(i));
        }
    }

    let vy: Vec<f64> = log.iter().map(|(s, _)| s.vy).collect();
    let r: Vec<f64> = log.iter().map(|(s, _)| s.r).collect();
    let vy_dot = differentiate(&vy, dt);
    let a_lat: Vec<f64> = log
        .iter()
        .zip(&vy_dot)
        .map(|((s, _), vyd)| vyd + s.vx * s.r)
        .collect();
    let a_lat_rate = differentiate(&a_lat, dt);
    let yaw_accel = differentiate(&r, dt);

    Ok((0..n)
        .map(|i| FeatureVector::new(log[i].0.vx, a_lat[i], r[i], a_lat_rate[i], yaw_accel[i]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> VehicleParams {
        VehicleParams::default()
    }

    #[test]
    fn zero_steering_preserves_straight_motion() {
        let s = VehicleState::cruising(0.0, 0.0, 10.0);
        let next = step_dynamic(&s, &ControlInput::new(0.0), &params(), 0.05).unwrap();
        assert_eq!(next, VehicleState::new(0.5, 0.0, 0.0, 10.0, 0.0, 0.0));
        // And lateral quantities stay exactly zero for all time.
        let mut s = next;
        for _ in 0..500 {
            s = step_dynamic(&s, &ControlInput::new(0.0), &params(), 0.02).unwrap();
            assert_eq!((s.y, s.psi, s.vy, s.r), (0.0, 0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn rejects_low_speed_and_bad_dt() {
        let s = VehicleState::cruising(0.0, 0.0, 0.2);
        let e = step_dynamic(&s, &ControlInput::default(), &params(), 0.02).unwrap_err();
        assert_eq!(e, VehicleError::SpeedTooLow(0.2));
        let s = VehicleState::cruising(0.0, 0.0, 10.0);
        assert!(step_dynamic(&s, &ControlInput::default(), &params(), 0.0).is_err());
        assert!(step_dynamic(&s, &ControlInput::default(), &params(), 0.2).is_err());
    }

    #[test]
    fn yaw_rate_converges_to_single_track_steady_state() {
        let p = params();
        let vx = 15.0;
        let delta = 0.02;
        let mut s = VehicleState::cruising(0.0, 0.0, vx);
        for _ in 0..2000 {
            s = step_dynamic(&s, &ControlInput::new(delta), &p, 0.02).unwrap();
        }
        let r_expected = vx * delta / (p.wheelbase() + p.understeer_gradient() * vx * vx);
        assert_relative_eq!(s.r, r_expected, max_relative = 0.01);
    }

    #[test]
    fn mirror_symmetry_negates_lateral_quantities() {
        let p = params();
        let dt = 0.02;
        let mut a = VehicleState::cruising(0.0, 0.0, 12.0);
        let mut b = a;
        for k in 0..300 {
            let delta = 0.05 * (0.31 * k as f64).sin();
            a = step_dynamic(&a, &ControlInput::new(delta), &p, dt).unwrap();
            b = step_dynamic(&b, &ControlInput::new(-delta), &p, dt).unwrap();
            assert_relative_eq!(a.x, b.x, epsilon = 1e-12);
            assert_relative_eq!(a.y, -b.y, epsilon = 1e-12);
            assert_relative_eq!(a.psi, -b.psi, epsilon = 1e-12);
            assert_relative_eq!(a.vy, -b.vy, epsilon = 1e-12);
            assert_relative_eq!(a.r, -b.r, epsilon = 1e-12);
        }
    }

    #[test]
    fn lateral_subsystem_is_linear_in_steering() {
        let p = params();
        let dt = 0.02;
        let run = |delta: f64| {
            let mut s = VehicleState::cruising(0.0, 0.0, 20.0);
            for _ in 0..100 {
                s = step_dynamic(&s, &ControlInput::new(delta), &p, dt).unwrap();
            }
            (s.vy, s.r)
        };
        let (vy1, r1) = run(0.01);
        let (vy2, r2) = run(0.03);
        let (vy_sum, r_sum) = run(2.0 * 0.01 + 0.5 * 0.03);
        assert_relative_eq!(vy_sum, 2.0 * vy1 + 0.5 * vy2, epsilon = 1e-12);
        assert_relative_eq!(r_sum, 2.0 * r1 + 0.5 * r2, epsilon = 1e-12);
    }

    #[test]
    fn linearize_kinematic_entries_by_hand() {
        let p = params();
        let dt = 0.02;
        let s = VehicleState::new(3.0, -1.0, 0.0, 10.0, 0.4, 0.1);
        let (a, b) = linearize(&s, &ControlInput::new(0.01), &p, dt).unwrap();
        assert_relative_eq!(a[(0, 2)], -s.vy * dt, epsilon = 1e-15);
        assert_relative_eq!(a[(1, 2)], s.vx * dt, epsilon = 1e-15);
        // Steering enters only vy and r under forward Euler.
        for row in 0..4 {
            assert_eq!(b[row], 0.0);
        }
        assert!(b[4] > 0.0 && b[5] > 0.0);
    }

    /// Central finite differences of step_dynamic, the independence oracle
    /// for linearize.
    fn fd_jacobians(
        s: &VehicleState,
        u: &ControlInput,
        p: &VehicleParams,
        dt: f64,
    ) -> (SMatrix<f64, 6, 6>, SVector<f64, 6>) {
        let h = 1e-6;
        let eval = |sv: &SVector<f64, 6>, delta: f64| {
            let st = VehicleState {
                x: sv[0],
                y: sv[1],
                psi: sv[2],
                vx: sv[3],
                vy: sv[4],
                r: sv[5],
            };
            euler_step_raw(&st, &ControlInput::new(delta), p, dt)
        };
        let z0 = SVector::from([s.x, s.y, s.psi, s.vx, s.vy, s.r]);
        let mut a = SMatrix::<f64, 6, 6>::zeros();
        for j in 0..6 {
            let mut zp = z0;
            let mut zm = z0;
            zp[j] += h;
            zm[j] -= h;
            let col = (eval(&zp, u.delta_f) - eval(&zm, u.delta_f)) / (2.0 * h);
            a.set_column(j, &col);
        }
        let b = (eval(&z0, u.delta_f + h) - eval(&z0, u.delta_f - h)) / (2.0 * h);
        (a, b)
    }

    #[test]
    fn linearize_matches_finite_differences_on_random_states() {
        let p = params();
        let dt = 0.02;
        let mut lcg: u64 = 0x9e3779b97f4a7c15;
        let mut unif = || {
            lcg = lcg.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (lcg >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100 {
            let s = VehicleState {
                x: 20.0 * unif() - 10.0,
                y: 20.0 * unif() - 10.0,
                psi: 5.0 * unif() - 2.5,
                vx: 3.0 + 22.0 * unif(),
                vy: 2.0 * unif() - 1.0,
                r: unif() - 0.5,
            };
            let u = ControlInput::new(0.8 * unif() - 0.4);
            let (a, b) = linearize(&s, &u, &p, dt).unwrap();
            let (a_fd, b_fd) = fd_jacobians(&s, &u, &p, dt);
            for i in 0..6 {
                for j in 0..6 {
                    let an = a[(i, j)];
                    assert!(
                        (a_fd[(i, j)] - an).abs() <= 1e-5 * an.abs() + 1e-7,
                        "A[{i}][{j}]: analytic {an}, fd {}",
                        a_fd[(i, j)]
                    );
                }
                let bn = b[i];
                assert!((b_fd[i] - bn).abs() <= 1e-5 * bn.abs() + 1e-7);
            }
        }
    }

    #[test]
    fn features_vanish_in_straight_motion() {
        let log: Vec<_> = (0..50)
            .map(|i| {
                let t = i as f64 * 0.02;
                (VehicleState::cruising(10.0 * t, 0.0, 10.0), t)
            })
            .collect();
        for f in compute_features(&log).unwrap() {
            assert_eq!(f.as_array(), [10.0, 0.0, 0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn features_on_steady_circle() {
        let vx = 12.0;
        let r0 = 0.2;
        let vy0 = -0.15;
        let log: Vec<_> = (0..60)
            .map(|i| {
                let t = i as f64 * 0.02;
                (VehicleState::new(vx * t, 0.0, wrap_angle(r0 * t), vx, vy0, r0), t)
            })
            .collect();
        for f in compute_features(&log).unwrap() {
            assert_relative_eq!(f.a_lat, vx * r0, epsilon = 1e-12);
            assert!(f.a_lat_rate.abs() < 1e-12);
            assert!(f.yaw_accel.abs() < 1e-12);
            assert_eq!(f.yaw_rate, r0);
        }
    }

    #[test]
    fn features_mirror_antisymmetry() {
        let p = params();
        let dt = 0.02;
        let mut s = VehicleState::cruising(0.0, 0.0, 14.0);
        let mut log_a = vec![(s, 0.0)];
        for k in 1..80 {
            let delta = 0.06 * (0.2 * k as f64).sin();
            s = step_dynamic(&s, &ControlInput::new(delta), &p, dt).unwrap();
            log_a.push((s, k as f64 * dt));
        }
        let log_b: Vec<_> = log_a
            .iter()
            .map(|(s, t)| (VehicleState { y: -s.y, psi: -s.psi, vy: -s.vy, r: -s.r, ..*s }, *t))
            .collect();
        let fa = compute_features(&log_a).unwrap();
        let fb = compute_features(&log_b).unwrap();
        for (a, b) in fa.iter().zip(&fb) {
            assert_eq!(a.v_long, b.v_long);
            assert_relative_eq!(a.a_lat, -b.a_lat, epsilon = 1e-12);
            assert_relative_eq!(a.yaw_rate, -b.yaw_rate, epsilon = 1e-12);
            assert_relative_eq!(a.a_lat_rate, -b.a_lat_rate, epsilon = 1e-12);
            assert_relative_eq!(a.yaw_accel, -b.yaw_accel, epsilon = 1e-12);
        }
    }

    #[test]
    fn features_converge_at_second_order_on_sinusoidal_log() {
        // Analytic log: vy = V sin(w t), r = R cos(w t), vx const.
        let vx = 10.0;
        let (v_amp, r_amp, w) = (0.4, 0.12, 1.7);
        let build = |dt: f64, n: usize| -> Vec<(VehicleState, f64)> {
            (0..n)
                .map(|i| {
                    let t = i as f64 * dt;
                    (
                        VehicleState::new(
                            vx * t,
                            0.0,
                            0.0,
                            vx,
                            v_amp * (w * t).sin(),
                            r_amp * (w * t).cos(),
                        ),
                        t,
                    )
                })
                .collect()
        };
        let max_err = |dt: f64| -> f64 {
            let n = (1.0 / dt) as usize + 1;
            let feats = compute_features(&build(dt, n)).unwrap();
            // The double-difference chain is O(dt^2) away from the ends;
            // the one-sided endpoint formulas degrade the two outermost
            // samples of each side to O(dt).
            feats
                .iter()
                .enumerate()
                .skip(2)
                .take(n - 4)
                .map(|(i, f)| {
                    let t = i as f64 * dt;
                    let a_lat = v_amp * w * (w * t).cos() + vx * r_amp * (w * t).cos();
                    let jerk = -(v_amp * w * w + vx * r_amp * w) * (w * t).sin();
                    let yacc = -r_amp * w * (w * t).sin();
                    (f.a_lat - a_lat)
                        .abs()
                        .max((f.a_lat_rate - jerk).abs())
                        .max((f.yaw_accel - yacc).abs())
                })
                .fold(0.0, f64::max)
        };
        let e1 = max_err(0.02);
        let e2 = max_err(0.01);
        // Halving dt should cut the error ~4x for an O(dt^2) scheme.
        assert!(e2 < e1 / 3.0, "e1 = {e1}, e2 = {e2}");
    }

    #[test]
    fn rejects_short_or_non_uniform_logs() {
        let s = VehicleState::cruising(0.0, 0.0, 10.0);
        assert_eq!(
            compute_features(&[(s, 0.0), (s, 0.02)]).unwrap_err(),
            VehicleError::LogTooShort(2)
        );
        assert_eq!(
            compute_features(&[(s, 0.0), (s, 0.02), (s, 0.05)]).unwrap_err(),
            VehicleError::NonUniformTimestamps(2)
        );
    }
}
