//! Analytic-hierarchy-process weighting and questionnaire scoring.

use super::{ComfortClass, ComfortError};
use nalgebra::{DMatrix, DVector};

/// Standard AHP random-index constants for n = 1..=9.
const RANDOM_INDEX: [f64; 9] = [0.0, 0.0, 0.58, 0.90, 1.12, 1.24, 1.32, 1.41, 1.45];

const RECIPROCAL_TOL: f64 = 1e-9;

/// Positive reciprocal pairwise-comparison matrix.
#[derive(Debug, Clone)]
pub struct ComparisonMatrix {
    entries: DMatrix<f64>,
}

impl ComparisonMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self, ComfortError> {
        let n = entries.nrows();
        if entries.ncols() != n || !(2..=9).contains(&n) {
            return Err(ComfortError::BadComparisonMatrix("must be square with 2 <= n <= 9"));
        }
        for i in 0..n {
            if (entries[(i, i)] - 1.0).abs() > RECIPROCAL_TOL {
                return Err(ComfortError::BadComparisonMatrix("diagonal must be 1"));
            }
            for j in 0..n {
                let a = entries[(i, j)];
                if !(a > 0.0 && a.is_finite()) {
                    return Err(ComfortError::BadComparisonMatrix("entries must be positive"));
                }
                if (entries[(j, i)] - 1.0 / a).abs() > RECIPROCAL_TOL {
                    return Err(ComfortError::BadComparisonMatrix("matrix is not reciprocal"));
                }
            }
        }
        Ok(Self { entries })
    }

    /// Perfectly consistent matrix generated from weights: a[i][j] = w_i/w_j.
    pub fn from_weights(w: &[f64]) -> Result<Self, ComfortError> {
        let n = w.len();
        let m = DMatrix::from_fn(n, n, |i, j| w[i] / w[j]);
        Self::new(m)
    }

    pub fn order(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }
}

#[derive(Debug, Clone)]
pub struct AhpResult {
    /// Normalized principal eigenvector (sums to 1).
    pub weights: Vec<f64>,
    pub lambda_max: f64,
    /// Consistency index (lambda_max - n) / (n - 1).
    pub ci: f64,
    /// Consistency ratio ci / RI(n); 0 when RI(n) = 0.
    pub cr: f64,
}

/// Principal-eigenvector weights by power iteration (relative tolerance
/// 1e-10, at most 10000 steps).
pub fn ahp_weights(m: &ComparisonMatrix) -> Result<AhpResult, ComfortError> {
    let n = m.order();
    let a = m.entries();
    let mut w = DVector::from_element(n, 1.0 / n as f64);
    let mut lambda = f64::NAN;
    let mut converged = false;
    for _ in 0..10_000 {
        let aw = a * &w;
        let sum = aw.sum();
        let w_next = &aw / sum;
        let lambda_next = sum; // since w sums to 1 and all entries are positive
        let dw = (&w_next - &w).amax();
        let dl = if lambda.is_nan() { f64::INFINITY } else { (lambda_next - lambda).abs() };
        w = w_next;
        lambda = lambda_next;
        if dw <= 1e-10 && dl <= 1e-10 * lambda.abs() {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(ComfortError::AhpNoConvergence);
    }
    let ci = (lambda - n as f64) / (n as f64 - 1.0);
    let ri = RANDOM_INDEX[n - 1];
    let cr = if ri == 0.0 { 0.0 } else { ci / ri };
    Ok(AhpResult { weights: w.iter().copied().collect(), lambda_max: lambda, ci, cr })
}

/// Five questionnaire item scores, each in [0, 1].
#[derive(Debug, Clone, Copy)]
pub struct QuestionnaireResponse {
    item_scores: [f64; 5],
}

impl QuestionnaireResponse {
    pub fn new(item_scores: [f64; 5]) -> Result<Self, ComfortError> {
        if item_scores.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(ComfortError::BadResponse);
        }
        Ok(Self { item_scores })
    }

    pub fn items(&self) -> &[f64; 5] {
        &self.item_scores
    }
}

/// Questionnaire item weights: non-negative, summing to 1.
#[derive(Debug, Clone, Copy)]
pub struct AhpWeights {
    w: [f64; 5],
}

impl AhpWeights {
    pub fn new(w: [f64; 5]) -> Result<Self, ComfortError> {
        if w.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(ComfortError::BadWeights);
        }
        if (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(ComfortError::BadWeights);
        }
        Ok(Self { w })
    }

    /// The questionnaire weighting used throughout: (0.09, 0.18, 0.18,
    /// 0.18, 0.37).
    pub fn questionnaire_default() -> Self {
        Self { w: [0.09, 0.18, 0.18, 0.18, 0.37] }
    }

    pub fn values(&self) -> &[f64; 5] {
        &self.w
    }
}

/// Overall subjective score: the weighted sum of item scores.
pub fn questionnaire_score(resp: &QuestionnaireResponse, w: &AhpWeights) -> f64 {
    resp.item_scores.iter().zip(&w.w).map(|(s, wi)| s * wi).sum()
}

/// Map a [0, 1] score to a class: poor below `t_poor`, good at or above
/// `t_good`, normal in between.
pub fn score_to_class(score: f64, thresholds: (f64, f64)) -> Result<ComfortClass, ComfortError> {
    let (t_poor, t_good) = thresholds;
    if !(0.0 <= t_poor && t_poor < t_good && t_good <= 1.0) {
        return Err(ComfortError::BadThresholds);
    }
    Ok(if score < t_poor {
        ComfortClass::Poor
    } else if score >= t_good {
        ComfortClass::Good
    } else {
        ComfortClass::Normal
    })
}
