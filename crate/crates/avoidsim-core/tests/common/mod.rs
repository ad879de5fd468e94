//! Shared test oracles, independent of the solver implementation paths
//! they check.
#![allow(dead_code)] // each integration test pulls what it needs

use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Exhaustive active-set enumeration oracle for small convex QPs
/// (min 0.5 x'Hx + f'x s.t. Ax <= b).
///
/// Solves the equality-constrained problem for every subset of constraints,
/// keeps the KKT-valid candidates, and returns the best (x, objective).
/// Feasible at n <= 8, m <= 12.
pub fn enumerate_qp(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Option<(DVector<f64>, f64)> {
    let n = f.len();
    let m = b.len();
    assert!(m <= 20, "enumeration oracle is exponential in m");
    let mut best: Option<(DVector<f64>, f64)> = None;

    for mask in 0u32..(1 << m) {
        let subset: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let k = subset.len();
        if k > n {
            continue;
        }
        let dim = n + k;
        let mut kkt = DMatrix::zeros(dim, dim);
        kkt.view_mut((0, 0), (n, n)).copy_from(h);
        for (s, &ci) in subset.iter().enumerate() {
            for j in 0..n {
                kkt[(j, n + s)] = a[(ci, j)];
                kkt[(n + s, j)] = a[(ci, j)];
            }
        }
        let mut rhs = DVector::zeros(dim);
        for j in 0..n {
            rhs[j] = -f[j];
        }
        for (s, &ci) in subset.iter().enumerate() {
            rhs[n + s] = b[ci];
        }
        let sol = match kkt.clone().full_piv_lu().solve(&rhs) {
            Some(s) => s,
            None => continue,
        };
        // Reject near-singular subsets the LU "solved" anyway.
        if (kkt * &sol - &rhs).amax() > 1e-8 * (1.0 + rhs.amax()) {
            continue;
        }
        let x = sol.rows(0, n).into_owned();
        let lam = sol.rows(n, k);
        if lam.iter().any(|&l| l < -1e-8) {
            continue;
        }
        let feasible = (0..m).all(|i| a.row(i).transpose().dot(&x) <= b[i] + 1e-8);
        if !feasible {
            continue;
        }
        let obj = 0.5 * (h * &x).dot(&x) + f.dot(&x);
        if best.as_ref().map_or(true, |(_, bo)| obj < bo - 1e-12) {
            best = Some((x, obj));
        }
    }
    best
}

/// Random strictly convex QP with a guaranteed-feasible region:
/// H = M'M + I, b chosen so a random point is strictly feasible.
pub fn random_qp<R: Rng>(
    rng: &mut R,
    n: usize,
    m: usize,
) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>, DVector<f64>) {
    let m_mat = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let h = m_mat.transpose() * &m_mat + DMatrix::identity(n, n);
    let f = DVector::from_fn(n, |_, _| rng.gen_range(-5.0..5.0));
    let a = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
    let x_feas = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
    let b = DVector::from_fn(m, |i, _| {
        a.row(i).transpose().dot(&x_feas) + rng.gen_range(0.05..2.0)
    });
    (h, f, a, b)
}
