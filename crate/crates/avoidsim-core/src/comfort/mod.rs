//! Subjective/objective comfort evaluation.
//!
//! Four classifiers map the objective dynamics indices to a good/normal/poor
//! label; a continuous confidence score in [0, 1] (expected utility over
//! soft class posteriors) feeds the planner cost. Questionnaire scoring and
//! AHP weighting live in [`ahp`], file formats in [`persist`].

mod ahp;
mod persist;

pub use ahp::{
    ahp_weights, questionnaire_score, score_to_class, AhpResult, AhpWeights, ComparisonMatrix,
    QuestionnaireResponse,
};
pub use persist::{
    load_model, model_from_toml, model_to_toml, read_dataset, read_dataset_str, save_model,
    write_dataset_string,
};

use crate::vehicle::FeatureVector;
use nalgebra::{Cholesky, SMatrix, SVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const NUM_FEATURES: usize = 5;
pub const NUM_CLASSES: usize = 3;

type Vec5 = SVector<f64, NUM_FEATURES>;
type Mat5 = SMatrix<f64, NUM_FEATURES, NUM_FEATURES>;

#[derive(Debug, Error, PartialEq)]
pub enum ComfortError {
    #[error("comparison matrix invalid: {0}")]
    BadComparisonMatrix(&'static str),
    #[error("AHP power iteration did not converge within 10000 steps")]
    AhpNoConvergence,
    #[error("questionnaire item scores must lie in [0, 1]")]
    BadResponse,
    #[error("weights must be non-negative and sum to 1")]
    BadWeights,
    #[error("thresholds must satisfy 0 <= t_poor < t_good <= 1")]
    BadThresholds,
    #[error("class {0} has fewer than 2 training samples")]
    TooFewSamples(&'static str),
    #[error("training features must be finite")]
    NonFiniteFeature,
    #[error("covariance for class {0} not positive definite after regularization")]
    NotPositiveDefinite(&'static str),
    #[error("priors must be non-negative and sum to 1")]
    BadPriors,
    #[error("risk matrix must be non-negative with a zero diagonal")]
    BadRisk,
    #[error("synthetic dataset config invalid: {0}")]
    BadSynthConfig(&'static str),
    #[error("dataset parse error at line {line}: {message}")]
    DatasetParse { line: usize, message: String },
    #[error("model file invalid: {0}")]
    BadModelFile(String),
    #[error("io error: {0}")]
    Io(String),
}

/// Ride-comfort label. The declaration order is the fixed tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComfortClass {
    Good,
    Normal,
    Poor,
}

impl ComfortClass {
    pub const ALL: [ComfortClass; NUM_CLASSES] =
        [ComfortClass::Good, ComfortClass::Normal, ComfortClass::Poor];

    pub fn index(self) -> usize {
        match self {
            ComfortClass::Good => 0,
            ComfortClass::Normal => 1,
            ComfortClass::Poor => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ComfortClass::Good => "good",
            ComfortClass::Normal => "normal",
            ComfortClass::Poor => "poor",
        }
    }

    pub fn from_label(s: &str) -> Option<ComfortClass> {
        match s {
            "good" => Some(ComfortClass::Good),
            "normal" => Some(ComfortClass::Normal),
            "poor" => Some(ComfortClass::Poor),
            _ => None,
        }
    }

    /// Utility used by the confidence score: good 1, normal 0.5, poor 0.
    pub fn utility(self) -> f64 {
        match self {
            ComfortClass::Good => 1.0,
            ComfortClass::Normal => 0.5,
            ComfortClass::Poor => 0.0,
        }
    }
}

/// Labelled feature vectors; every class has at least two samples.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    samples: Vec<(FeatureVector, ComfortClass)>,
}

impl TrainingSet {
    pub fn new(samples: Vec<(FeatureVector, ComfortClass)>) -> Result<Self, ComfortError> {
        for (f, _) in &samples {
            if f.as_array().iter().any(|v| !v.is_finite()) {
                return Err(ComfortError::NonFiniteFeature);
            }
        }
        for class in ComfortClass::ALL {
            let count = samples.iter().filter(|(_, c)| *c == class).count();
            if count < 2 {
                return Err(ComfortError::TooFewSamples(class.label()));
            }
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[(FeatureVector, ComfortClass)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    TemplateMatching,
    ClassCenterEuclidean,
    Mahalanobis,
    BayesMinRisk,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 4] = [
        ClassifierKind::TemplateMatching,
        ClassifierKind::ClassCenterEuclidean,
        ClassifierKind::Mahalanobis,
        ClassifierKind::BayesMinRisk,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::TemplateMatching => "template_matching",
            ClassifierKind::ClassCenterEuclidean => "class_center_euclidean",
            ClassifierKind::Mahalanobis => "mahalanobis",
            ClassifierKind::BayesMinRisk => "bayes_min_risk",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// Per-feature z-score transform fitted on the training set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: [f64; NUM_FEATURES],
    pub std: [f64; NUM_FEATURES],
}

impl Standardizer {
    fn fit(samples: &[(FeatureVector, ComfortClass)]) -> Self {
        let n = samples.len() as f64;
        let mut mean = [0.0; NUM_FEATURES];
        for (f, _) in samples {
            for (m, v) in mean.iter_mut().zip(f.as_array()) {
                *m += v / n;
            }
        }
        let mut var = [0.0; NUM_FEATURES];
        for (f, _) in samples {
            for ((v, m), x) in var.iter_mut().zip(&mean).zip(f.as_array()) {
                *v += (x - m) * (x - m) / n;
            }
        }
        let std = var.map(|v| {
            let s = v.sqrt();
            if s > 1e-12 {
                s
            } else {
                1.0
            }
        });
        Self { mean, std }
    }

    pub fn apply(&self, f: &FeatureVector) -> Vec5 {
        let a = f.as_array();
        Vec5::from_fn(|i, _| (a[i] - self.mean[i]) / self.std[i])
    }
}

#[derive(Debug, Clone)]
struct ClassGaussian {
    mean: Vec5,
    /// Regularized covariance in standardized space.
    cov: Mat5,
    cov_inv: Mat5,
    log_det: f64,
}

impl ClassGaussian {
    fn from_mean_cov(class: ComfortClass, mean: Vec5, cov: Mat5) -> Result<Self, ComfortError> {
        let chol = Cholesky::new(cov).ok_or(ComfortError::NotPositiveDefinite(class.label()))?;
        let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Ok(Self { mean, cov, cov_inv: chol.inverse(), log_det })
    }

    fn mahalanobis_sq(&self, x: &Vec5) -> f64 {
        let d = x - self.mean;
        (self.cov_inv * d).dot(&d)
    }
}

/// Options for [`train`]; `None` fields fall back to the defaults noted on
/// each.
#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Ridge added to each class covariance; default 1e-6 * trace / 5.
    pub lambda: Option<f64>,
    /// Class priors; default empirical frequencies.
    pub priors: Option<[f64; NUM_CLASSES]>,
    /// Decision risk, rows = decided class, columns = true class;
    /// default 0-1 loss.
    pub risk: Option<[[f64; NUM_CLASSES]; NUM_CLASSES]>,
}

/// A trained classifier. Immutable after [`train`]; classification and
/// scoring are read-only.
#[derive(Debug, Clone)]
pub struct ClassifierModel {
    kind: ClassifierKind,
    standardizer: Standardizer,
    gaussians: [ClassGaussian; NUM_CLASSES],
    /// Stored standardized samples, used by template matching.
    templates: Vec<(Vec5, ComfortClass)>,
    priors: [f64; NUM_CLASSES],
    risk: [[f64; NUM_CLASSES]; NUM_CLASSES],
    /// Softmax temperature for the confidence score.
    tau: f64,
}

pub fn train(
    data: &TrainingSet,
    kind: ClassifierKind,
    options: &TrainOptions,
) -> Result<ClassifierModel, ComfortError> {
    let standardizer = Standardizer::fit(data.samples());
    let templates: Vec<(Vec5, ComfortClass)> = data
        .samples()
        .iter()
        .map(|(f, c)| (standardizer.apply(f), *c))
        .collect();

    let mut counts = [0usize; NUM_CLASSES];
    let mut means = [Vec5::zeros(); NUM_CLASSES];
    for (x, c) in &templates {
        counts[c.index()] += 1;
        means[c.index()] += x;
    }
    for (m, &n) in means.iter_mut().zip(&counts) {
        *m /= n as f64;
    }

    let mut gaussians = Vec::with_capacity(NUM_CLASSES);
    for class in ComfortClass::ALL {
        let k = class.index();
        let mut cov = Mat5::zeros();
        for (x, c) in templates.iter().filter(|(_, c)| *c == class) {
            let _ = c;
            let d = x - means[k];
            cov += d * d.transpose();
        }
        cov /= (counts[k] - 1) as f64;
        let lambda = options.lambda.unwrap_or(1e-6 * cov.trace() / NUM_FEATURES as f64);
        cov += Mat5::identity() * lambda;
        gaussians.push(ClassGaussian::from_mean_cov(class, means[k], cov)?);
    }
    let gaussians: [ClassGaussian; NUM_CLASSES] = gaussians.try_into().unwrap();

    let total = data.len() as f64;
    let priors = match options.priors {
        Some(p) => {
            if p.iter().any(|v| *v < 0.0) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(ComfortError::BadPriors);
            }
            p
        }
        None => [0, 1, 2].map(|k| counts[k] as f64 / total),
    };
    let risk = match options.risk {
        Some(r) => {
            let diag_ok = (0..NUM_CLASSES).all(|i| r[i][i] == 0.0);
            let nonneg = r.iter().flatten().all(|v| *v >= 0.0);
            if !diag_ok || !nonneg {
                return Err(ComfortError::BadRisk);
            }
            r
        }
        None => {
            let mut r = [[1.0; NUM_CLASSES]; NUM_CLASSES];
            for (i, row) in r.iter_mut().enumerate() {
                row[i] = 0.0;
            }
            r
        }
    };

    Ok(ClassifierModel { kind, standardizer, gaussians, templates, priors, risk, tau: 1.0 })
}

impl ClassifierModel {
    /// Assemble a model from explicit parameters (persistence, analytically
    /// constructed models). Covariances must be positive definite as given;
    /// no regularization is applied here.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        kind: ClassifierKind,
        standardizer: Standardizer,
        means: [[f64; NUM_FEATURES]; NUM_CLASSES],
        covariances: [[[f64; NUM_FEATURES]; NUM_FEATURES]; NUM_CLASSES],
        templates: Vec<([f64; NUM_FEATURES], ComfortClass)>,
        priors: [f64; NUM_CLASSES],
        risk: [[f64; NUM_CLASSES]; NUM_CLASSES],
        tau: f64,
    ) -> Result<Self, ComfortError> {
        if priors.iter().any(|v| *v < 0.0) || (priors.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(ComfortError::BadPriors);
        }
        if (0..NUM_CLASSES).any(|i| risk[i][i] != 0.0) || risk.iter().flatten().any(|v| *v < 0.0) {
            return Err(ComfortError::BadRisk);
        }
        if tau <= 0.0 || !tau.is_finite() {
            return Err(ComfortError::BadModelFile("temperature must be positive".into()));
        }
        if kind == ClassifierKind::TemplateMatching {
            for class in ComfortClass::ALL {
                if !templates.iter().any(|(_, c)| *c == class) {
                    return Err(ComfortError::TooFewSamples(class.label()));
                }
            }
        }
        let mut gaussians = Vec::with_capacity(NUM_CLASSES);
        for class in ComfortClass::ALL {
            let k = class.index();
            let mean = Vec5::from_fn(|i, _| means[k][i]);
            let cov = Mat5::from_fn(|i, j| covariances[k][i][j]);
            gaussians.push(ClassGaussian::from_mean_cov(class, mean, cov)?);
        }
        let templates = templates
            .into_iter()
            .map(|(t, c)| (Vec5::from_fn(|i, _| t[i]), c))
            .collect();
        Ok(Self {
            kind,
            standardizer,
            gaussians: gaussians.try_into().unwrap(),
            templates,
            priors,
            risk,
            tau,
        })
    }

    pub fn kind(&self) -> ClassifierKind {
        self.kind
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    pub fn class_means(&self) -> [[f64; NUM_FEATURES]; NUM_CLASSES] {
        [0, 1, 2].map(|k| self.gaussians[k].mean.into())
    }

    pub fn class_covariances(&self) -> [[[f64; NUM_FEATURES]; NUM_FEATURES]; NUM_CLASSES] {
        [0, 1, 2].map(|k| {
            let mut rows = [[0.0; NUM_FEATURES]; NUM_FEATURES];
            for (i, row) in rows.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = self.gaussians[k].cov[(i, j)];
                }
            }
            rows
        })
    }

    pub fn priors(&self) -> [f64; NUM_CLASSES] {
        self.priors
    }

    pub fn risk(&self) -> [[f64; NUM_CLASSES]; NUM_CLASSES] {
        self.risk
    }

    pub fn stored_templates(&self) -> Vec<([f64; NUM_FEATURES], ComfortClass)> {
        self.templates.iter().map(|(t, c)| ((*t).into(), *c)).collect()
    }

    pub fn temperature(&self) -> f64 {
        self.tau
    }

    /// Same model with a different confidence-score temperature.
    pub fn with_temperature(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    /// Squared per-class distances in standardized space, per the model
    /// kind's metric.
    fn class_distances_sq(&self, x: &Vec5) -> [f64; NUM_CLASSES] {
        match self.kind {
            ClassifierKind::TemplateMatching => {
                let mut d = [f64::INFINITY; NUM_CLASSES];
                for (t, c) in &self.templates {
                    let dist = (x - t).norm_squared();
                    if dist < d[c.index()] {
                        d[c.index()] = dist;
                    }
                }
                d
            }
            ClassifierKind::ClassCenterEuclidean | ClassifierKind::BayesMinRisk => {
                [0, 1, 2].map(|k| (x - self.gaussians[k].mean).norm_squared())
            }
            ClassifierKind::Mahalanobis => [0, 1, 2].map(|k| self.gaussians[k].mahalanobis_sq(x)),
        }
    }

    /// Gaussian class posteriors p(class | x).
    fn posteriors(&self, x: &Vec5) -> [f64; NUM_CLASSES] {
        let log_joint: [f64; NUM_CLASSES] = [0, 1, 2].map(|k| {
            let g = &self.gaussians[k];
            self.priors[k].max(1e-300).ln() - 0.5 * (g.mahalanobis_sq(x) + g.log_det)
        });
        softmax(&log_joint)
    }
}

fn softmax(v: &[f64; NUM_CLASSES]) -> [f64; NUM_CLASSES] {
    let max = v.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let exps = v.map(|x| (x - max).exp());
    let sum: f64 = exps.iter().sum();
    exps.map(|e| e / sum)
}

fn argmin_class(values: &[f64; NUM_CLASSES]) -> ComfortClass {
    // Strict inequality keeps the earliest class on ties (good < normal <
    // poor).
    let mut best = ComfortClass::Good;
    for class in ComfortClass::ALL {
        if values[class.index()] < values[best.index()] {
            best = class;
        }
    }
    best
}

/// Classify one feature vector. Deterministic and total on finite inputs.
pub fn classify(model: &ClassifierModel, x: &FeatureVector) -> ComfortClass {
    let z = model.standardizer.apply(x);
    match model.kind {
        ClassifierKind::BayesMinRisk => {
            let post = model.posteriors(&z);
            let expected_risk: [f64; NUM_CLASSES] = [0, 1, 2].map(|k| {
                (0..NUM_CLASSES).map(|j| model.risk[k][j] * post[j]).sum::<f64>()
            });
            argmin_class(&expected_risk)
        }
        _ => argmin_class(&model.class_distances_sq(&z)),
    }
}

/// Continuous confidence in [0, 1]: expected class utility under soft
/// posteriors — softmax over negative squared distances for the
/// distance-based kinds, Gaussian posteriors for the Bayes kind.
pub fn confidence_score(model: &ClassifierModel, x: &FeatureVector) -> f64 {
    let z = model.standardizer.apply(x);
    let p = match model.kind {
        ClassifierKind::BayesMinRisk => model.posteriors(&z),
        _ => {
            let d = model.class_distances_sq(&z);
            softmax(&d.map(|v| -v / model.tau))
        }
    };
    ComfortClass::ALL
        .iter()
        .map(|c| c.utility() * p[c.index()])
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

/// Accuracy plus a 3x3 confusion matrix (rows = true class, columns =
/// predicted).
pub fn evaluate_accuracy(
    model: &ClassifierModel,
    test: &TrainingSet,
) -> (f64, [[usize; NUM_CLASSES]; NUM_CLASSES]) {
    let mut confusion = [[0usize; NUM_CLASSES]; NUM_CLASSES];
    let mut correct = 0usize;
    for (f, truth) in test.samples() {
        let pred = classify(model, f);
        confusion[truth.index()][pred.index()] += 1;
        if pred == *truth {
            correct += 1;
        }
    }
    (correct as f64 / test.len() as f64, confusion)
}

/// Synthetic Gaussian-cluster dataset config; stands in for field-test data.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_per_class: usize,
    /// Class means (good, normal, poor) over the five indices.
    pub means: [[f64; NUM_FEATURES]; NUM_CLASSES],
    /// Per-class covariance matrices.
    pub covariances: [[[f64; NUM_FEATURES]; NUM_FEATURES]; NUM_CLASSES],
    /// Probability of flipping a label to one of the other classes, in
    /// [0, 0.5).
    pub label_noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        // Comfort degrades as lateral acceleration, lateral jerk, and yaw
        // acceleration grow; speed stays near 30 km/h.
        let means = [
            [8.3, 1.0, 0.05, 0.5, 0.05],
            [8.3, 2.5, 0.12, 1.5, 0.15],
            [8.3, 4.5, 0.25, 3.5, 0.35],
        ];
        let diag = [0.3f64, 0.7, 0.035, 0.5, 0.05].map(|s| s * s);
        let mut cov = [[0.0; NUM_FEATURES]; NUM_FEATURES];
        for i in 0..NUM_FEATURES {
            cov[i][i] = diag[i];
        }
        Self { seed: 42, n_per_class: 60, means, covariances: [cov, cov, cov], label_noise: 0.0 }
    }
}

impl SynthConfig {
    /// Unit-covariance clusters with adjacent class means `separation`
    /// standard deviations apart along the all-ones direction.
    pub fn separated(seed: u64, n_per_class: usize, separation: f64) -> Self {
        let step = separation / (NUM_FEATURES as f64).sqrt();
        let means = [0, 1, 2].map(|k| [k as f64 * step; NUM_FEATURES]);
        let mut cov = [[0.0; NUM_FEATURES]; NUM_FEATURES];
        for i in 0..NUM_FEATURES {
            cov[i][i] = 1.0;
        }
        Self { seed, n_per_class, means, covariances: [cov, cov, cov], label_noise: 0.0 }
    }
}

/// Deterministic synthetic dataset: Gaussian clusters with optional label
/// flips.
pub fn synth_dataset(config: &SynthConfig) -> Result<TrainingSet, ComfortError> {
    if config.n_per_class < 2 {
        return Err(ComfortError::BadSynthConfig("n_per_class must be >= 2"));
    }
    if !(0.0..0.5).contains(&config.label_noise) {
        return Err(ComfortError::BadSynthConfig("label_noise must lie in [0, 0.5)"));
    }
    let mut factors = Vec::with_capacity(NUM_CLASSES);
    for k in 0..NUM_CLASSES {
        let cov = Mat5::from_fn(|i, j| config.covariances[k][i][j]);
        let chol =
            Cholesky::new(cov).ok_or(ComfortError::BadSynthConfig("covariance not positive definite"))?;
        factors.push(chol.l());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut samples = Vec::with_capacity(NUM_CLASSES * config.n_per_class);
    for class in ComfortClass::ALL {
        let k = class.index();
        let mean = Vec5::from_fn(|i, _| config.means[k][i]);
        for _ in 0..config.n_per_class {
            let z = Vec5::from_fn(|_, _| rng.sample(StandardNormal));
            let x = mean + factors[k] * z;
            let label = if config.label_noise > 0.0 && rng.gen::<f64>() < config.label_noise {
                let others: Vec<ComfortClass> =
                    ComfortClass::ALL.into_iter().filter(|c| *c != class).collect();
                others[rng.gen_range(0..others.len())]
            } else {
                class
            };
            samples.push((FeatureVector::from_array(x.into()), label));
        }
    }
    TrainingSet::new(samples)
}
