//! Dense convex quadratic programming by the primal active-set method.
//!
//! Problems take the form
//!
//! ```text
//!     minimize    0.5 x' H x + f' x + c0
//!     subject to  A x <= b
//! ```
//!
//! with H symmetric positive definite (a tiny ridge is added when a
//! Cholesky factorization fails). The working-set iteration solves the
//! equality-constrained subproblem through the bordered KKT system, steps to
//! the nearest blocking constraint, and drops the most negative multiplier;
//! a Bland-style smallest-index rule takes over when the objective stalls.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("hessian not positive definite after ridge regularization")]
    NotPositiveDefinite,
    #[error("supplied start point violates constraint {0}")]
    InfeasibleStart(usize),
}

/// Dense convex QP with inequality constraints `a_ineq x <= b_ineq`.
#[derive(Debug, Clone)]
pub struct QpProblem {
    h: DMatrix<f64>,
    f: DVector<f64>,
    a_ineq: DMatrix<f64>,
    b_ineq: DVector<f64>,
    /// Constant objective offset; carried so reported objectives match the
    /// cost the problem was condensed from.
    c0: f64,
}

impl QpProblem {
    /// Build a problem; `h` is symmetrized as (h + h')/2.
    pub fn new(
        h: DMatrix<f64>,
        f: DVector<f64>,
        a_ineq: DMatrix<f64>,
        b_ineq: DVector<f64>,
    ) -> Result<Self, QpError> {
        let n = f.len();
        if h.nrows() != n || h.ncols() != n {
            return Err(QpError::DimensionMismatch(format!(
                "h is {}x{}, expected {n}x{n}",
                h.nrows(),
                h.ncols()
            )));
        }
        if a_ineq.nrows() != b_ineq.len() || (a_ineq.nrows() > 0 && a_ineq.ncols() != n) {
            return Err(QpError::DimensionMismatch(format!(
                "a_ineq is {}x{} with b of length {}",
                a_ineq.nrows(),
                a_ineq.ncols(),
                b_ineq.len()
            )));
        }
        let h = (&h + h.transpose()) * 0.5;
        Ok(Self { h, f, a_ineq, b_ineq, c0: 0.0 })
    }

    /// Unconstrained problem.
    pub fn unconstrained(h: DMatrix<f64>, f: DVector<f64>) -> Result<Self, QpError> {
        let n = f.len();
        Self::new(h, f, DMatrix::zeros(0, n), DVector::zeros(0))
    }

    /// Append simple bounds lb <= x <= ub as inequality rows.
    pub fn with_bounds(mut self, lb: &DVector<f64>, ub: &DVector<f64>) -> Result<Self, QpError> {
        let n = self.f.len();
        if lb.len() != n || ub.len() != n {
            return Err(QpError::DimensionMismatch("bounds length".into()));
        }
        let m = self.a_ineq.nrows();
        let mut a = DMatrix::zeros(m + 2 * n, n);
        let mut b = DVector::zeros(m + 2 * n);
        a.view_mut((0, 0), (m, n)).copy_from(&self.a_ineq);
        b.rows_mut(0, m).copy_from(&self.b_ineq);
        for i in 0..n {
            a[(m + i, i)] = 1.0;
            b[m + i] = ub[i];
            a[(m + n + i, i)] = -1.0;
            b[m + n + i] = -lb[i];
        }
        self.a_ineq = a;
        self.b_ineq = b;
        Ok(self)
    }

    /// Set the constant objective offset.
    pub fn with_constant(mut self, c0: f64) -> Self {
        self.c0 = c0;
        self
    }

    pub fn num_vars(&self) -> usize {
        self.f.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.b_ineq.len()
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn linear(&self) -> &DVector<f64> {
        &self.f
    }

    pub fn constraints(&self) -> (&DMatrix<f64>, &DVector<f64>) {
        (&self.a_ineq, &self.b_ineq)
    }

    /// Objective 0.5 x' H x + f' x + c0 at a point.
    pub fn objective_at(&self, x: &DVector<f64>) -> f64 {
        0.5 * (&self.h * x).dot(x) + self.f.dot(x) + self.c0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIterations,
}

/// Solver output. When `status` is `Optimal` the KKT residuals are within
/// the solve tolerance (see [`kkt_residuals`]).
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub active_set: Vec<usize>,
    /// One multiplier per constraint row, >= 0 at an optimum.
    pub multipliers: DVector<f64>,
    pub objective: f64,
    pub status: QpStatus,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Feasible start; verified, and phase 1 is skipped when supplied.
    pub x0: Option<DVector<f64>>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 200, x0: None }
    }
}

/// Per-iteration trace record for diagnostics sinks.
#[derive(Debug, Clone)]
pub struct TraceEvent {
    pub iteration: usize,
    pub objective: f64,
    pub active_set: Vec<usize>,
}

/// The four KKT residuals of (problem, solution), computed directly from
/// their definitions and independent of solver internals.
#[derive(Debug, Clone, Copy)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.dual).max(self.complementarity)
    }
}

pub fn kkt_residuals(p: &QpProblem, s: &QpSolution) -> KktResiduals {
    let grad = &p.h * &s.x + &p.f + p.a_ineq.transpose() * &s.multipliers;
    let stationarity = grad.amax();
    let slack = &p.a_ineq * &s.x - &p.b_ineq;
    let primal = slack.iter().fold(0.0, |m: f64, v| m.max(*v));
    let dual = s.multipliers.iter().fold(0.0, |m: f64, l| m.max(-l));
    let complementarity = s
        .multipliers
        .iter()
        .zip(slack.iter())
        .fold(0.0, |m: f64, (l, sl)| m.max((l * sl).abs()));
    KktResiduals { stationarity, primal, dual, complementarity }
}

/// Solve the QP with a no-op trace sink.
pub fn solve_qp(p: &QpProblem, options: &SolveOptions) -> Result<QpSolution, QpError> {
    solve_qp_traced(p, options, &mut |_| {})
}

/// Solve the QP, reporting each working-set iteration to `sink`.
pub fn solve_qp_traced(
    p: &QpProblem,
    options: &SolveOptions,
    sink: &mut dyn FnMut(&TraceEvent),
) -> Result<QpSolution, QpError> {
    let n = p.num_vars();
    let m = p.num_constraints();
    let tol = options.tol;

    // Positive-definiteness gate with ridge fallback.
    let mut h = p.h.clone();
    if h.clone().cholesky().is_none() {
        let ridge = 1e-10 * h.trace() / n as f64;
        h += DMatrix::identity(n, n) * ridge;
        if h.clone().cholesky().is_none() {
            return Err(QpError::NotPositiveDefinite);
        }
    }

    // Feasible start.
    let mut x = match &options.x0 {
        Some(x0) => {
            if x0.len() != n {
                return Err(QpError::DimensionMismatch("x0 length".into()));
            }
            for i in 0..m {
                if p.a_ineq.row(i).transpose().dot(x0) > p.b_ineq[i] + tol.max(1e-12) {
                    return Err(QpError::InfeasibleStart(i));
                }
            }
            x0.clone()
        }
        None => match phase1_feasible_point(&p.a_ineq, &p.b_ineq, tol)? {
            Some(x0) => x0,
            None => {
                return Ok(QpSolution {
                    x: DVector::zeros(n),
                    active_set: vec![],
                    multipliers: DVector::zeros(m),
                    objective: f64::INFINITY,
                    status: QpStatus::Infeasible,
                    iterations: 0,
                });
            }
        },
    };

    let mut working: Vec<usize> = Vec::new();
    let mut iterations = 0usize;
    let mut stall = 0usize;
    let mut bland = false;
    let mut last_obj = p.objective_at(&x);

    while iterations < options.max_iter {
        iterations += 1;
        let grad = &h * &x + &p.f;

        // Equality-constrained subproblem on the working set via the
        // bordered KKT system [H Aw'; Aw 0] [pstep; lam] = [-grad; 0].
        let w = working.len();
        let dim = n + w;
        let mut kkt = DMatrix::zeros(dim, dim);
        kkt.view_mut((0, 0), (n, n)).copy_from(&h);
        for (k, &ci) in working.iter().enumerate() {
            for j in 0..n {
                kkt[(j, n + k)] = p.a_ineq[(ci, j)];
                kkt[(n + k, j)] = p.a_ineq[(ci, j)];
            }
        }
        let mut rhs = DVector::zeros(dim);
        rhs.rows_mut(0, n).copy_from(&(-&grad));
        let sol = kkt
            .full_piv_lu()
            .solve(&rhs)
            .ok_or(QpError::NotPositiveDefinite)?;
        let pstep = sol.rows(0, n).into_owned();
        let lam_w = sol.rows(n, w).into_owned();

        let step_scale = 1.0 + x.amax();
        if pstep.amax() <= tol * step_scale {
            // Stationary on the working set: check multiplier signs.
            let (drop_idx, min_lam) = if bland {
                // Smallest constraint index among negative multipliers.
                working
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| lam_w[*k] < -tol)
                    .min_by_key(|(_, &ci)| ci)
                    .map(|(k, _)| (Some(k), lam_w[k]))
                    .unwrap_or((None, 0.0))
            } else {
                let mut best: Option<(usize, f64)> = None;
                for k in 0..w {
                    if lam_w[k] < -tol && best.map_or(true, |(_, v)| lam_w[k] < v) {
                        best = Some((k, lam_w[k]));
                    }
                }
                (best.map(|(k, _)| k), best.map_or(0.0, |(_, v)| v))
            };
            let _ = min_lam;
            match drop_idx {
                None => {
                    // KKT satisfied: assemble full multiplier vector.
                    let mut multipliers = DVector::zeros(m);
                    for (k, &ci) in working.iter().enumerate() {
                        multipliers[ci] = lam_w[k].max(0.0);
                    }
                    let objective = p.objective_at(&x);
                    sink(&TraceEvent { iteration: iterations, objective, active_set: working.clone() });
                    return Ok(QpSolution {
                        x,
                        active_set: working,
                        multipliers,
                        objective,
                        status: QpStatus::Optimal,
                        iterations,
                    });
                }
                Some(k) => {
                    working.remove(k);
                }
            }
        } else {
            // Step to the nearest blocking constraint outside the working
            // set. First-encountered minimum ratio wins, i.e. smallest
            // constraint index on ties.
            let pnorm = pstep.norm();
            let mut alpha = 1.0f64;
            let mut blocking: Option<usize> = None;
            for i in 0..m {
                if working.contains(&i) {
                    continue;
                }
                let row = p.a_ineq.row(i).transpose();
                let ap = row.dot(&pstep);
                if ap > 1e-11 * row.norm() * (1.0 + pnorm) {
                    let gap = p.b_ineq[i] - row.dot(&x);
                    let ratio = (gap / ap).max(0.0);
                    if ratio < alpha {
                        alpha = ratio;
                        blocking = Some(i);
                    }
                }
            }
            if alpha > 0.0 {
                x += &pstep * alpha;
            }
            if let Some(bi) = blocking {
                working.push(bi);
            }
        }

        let obj = p.objective_at(&x);
        sink(&TraceEvent { iteration: iterations, objective: obj, active_set: working.clone() });
        if obj < last_obj - tol * (1.0 + last_obj.abs()) {
            stall = 0;
        } else {
            stall += 1;
            if stall > 3 * m.max(1) {
                bland = true;
            }
        }
        last_obj = obj;
    }

    let mut multipliers = DVector::zeros(m);
    let grad = &h * &x + &p.f;
    // Best-effort multipliers for the final working set.
    if !working.is_empty() {
        let aw = DMatrix::from_fn(working.len(), n, |k, j| p.a_ineq[(working[k], j)]);
        if let Ok(lam) = aw.transpose().svd(true, true).solve(&(-&grad), 1e-12) {
            for (k, &ci) in working.iter().enumerate() {
                multipliers[ci] = lam[k];
            }
        }
    }
    Ok(QpSolution {
        objective: p.objective_at(&x),
        x,
        active_set: working,
        multipliers,
        status: QpStatus::MaxIterations,
        iterations,
    })
}

/// Find a point with a_ineq x <= b_ineq + tol, or report infeasibility.
///
/// Solved as an auxiliary QP over (x, s) with one slack variable:
/// minimize eps/2 ||x||^2 + s^2/2 + s subject to a_i x - s <= b_i, -s <= 0.
/// The start (0, max(0, max_i -b_i) + 1) is feasible by construction, and
/// the objective is strictly increasing in s on s >= 0, so the minimizer
/// drives the slack to the smallest attainable violation.
pub fn phase1_feasible_point(
    a_ineq: &DMatrix<f64>,
    b_ineq: &DVector<f64>,
    tol: f64,
) -> Result<Option<DVector<f64>>, QpError> {
    let m = a_ineq.nrows();
    let n = a_ineq.ncols();
    if b_ineq.len() != m {
        return Err(QpError::DimensionMismatch("phase1 b length".into()));
    }
    if m == 0 {
        return Ok(Some(DVector::zeros(n)));
    }
    // Quick accept: the origin.
    if (0..m).all(|i| 0.0 <= b_ineq[i] + tol) {
        return Ok(Some(DVector::zeros(n)));
    }

    let scale = a_ineq.amax().max(1.0);
    let eps = 1e-8 / (scale * scale);
    let mut h = DMatrix::identity(n + 1, n + 1) * eps;
    h[(n, n)] = 1.0;
    let mut f = DVector::zeros(n + 1);
    f[n] = 1.0;
    let mut a = DMatrix::zeros(m + 1, n + 1);
    a.view_mut((0, 0), (m, n)).copy_from(a_ineq);
    for i in 0..m {
        a[(i, n)] = -1.0;
    }
    a[(m, n)] = -1.0;
    let mut b = DVector::zeros(m + 1);
    b.rows_mut(0, m).copy_from(b_ineq);

    let s0 = b_ineq.iter().fold(0.0f64, |mx, bi| mx.max(-bi)) + 1.0;
    let mut x0 = DVector::zeros(n + 1);
    x0[n] = s0;

    let aux = QpProblem::new(h.clone(), f, a, b)?;
    let opts = SolveOptions {
        tol: (tol * 1e-3).max(1e-12),
        max_iter: 50 * (m + n + 1),
        x0: Some(x0),
    };
    let sol = solve_qp(&aux, &opts)?;
    let s_min = sol.x[n];
    if sol.status == QpStatus::Optimal && s_min <= tol {
        Ok(Some(sol.x.rows(0, n).into_owned()))
    } else if sol.status == QpStatus::Optimal {
        Ok(None)
    } else {
        // Conservative: treat solver failure on the auxiliary as infeasible
        // only when the slack stayed large.
        if s_min <= tol {
            Ok(Some(sol.x.rows(0, n).into_owned()))
        } else {
            Ok(None)
        }
    }
}
