//! Model and dataset file formats.
//!
//! Models persist as a TOML key-value tree; floats are written in Rust's
//! shortest round-trip form so means and covariances survive a save/load
//! cycle bit-exactly. Datasets are CSV with the header
//! `v_long,a_lat,yaw_rate,a_lat_rate,yaw_accel,label`.

use super::{
    ClassifierKind, ClassifierModel, ComfortClass, ComfortError, Standardizer, TrainingSet,
    NUM_CLASSES, NUM_FEATURES,
};
use crate::vehicle::FeatureVector;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const DATASET_HEADER: &str = "v_long,a_lat,yaw_rate,a_lat_rate,yaw_accel,label";

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    kind: ClassifierKind,
    tau: f64,
    standardizer: Standardizer,
    means: Vec<[f64; NUM_FEATURES]>,
    covariances: Vec<Vec<[f64; NUM_FEATURES]>>,
    priors: [f64; NUM_CLASSES],
    risk: Vec<[f64; NUM_CLASSES]>,
    templates: Vec<TemplateRow>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TemplateRow {
    label: ComfortClass,
    features: [f64; NUM_FEATURES],
}

pub fn model_to_toml(model: &ClassifierModel) -> String {
    let covs = model.class_covariances();
    let file = ModelFile {
        kind: model.kind(),
        tau: model.temperature(),
        standardizer: model.standardizer().clone(),
        means: model.class_means().to_vec(),
        covariances: covs.iter().map(|c| c.to_vec()).collect(),
        priors: model.priors(),
        risk: model.risk().to_vec(),
        templates: model
            .stored_templates()
            .into_iter()
            .map(|(features, label)| TemplateRow { label, features })
            .collect(),
    };
    toml::to_string(&file).expect("model serialization cannot fail")
}

pub fn model_from_toml(text: &str) -> Result<ClassifierModel, ComfortError> {
    let file: ModelFile =
        toml::from_str(text).map_err(|e| ComfortError::BadModelFile(e.to_string()))?;
    if file.means.len() != NUM_CLASSES
        || file.covariances.len() != NUM_CLASSES
        || file.risk.len() != NUM_CLASSES
        || file.covariances.iter().any(|c| c.len() != NUM_FEATURES)
    {
        return Err(ComfortError::BadModelFile("wrong class or feature count".into()));
    }
    let means: [[f64; NUM_FEATURES]; NUM_CLASSES] = [0, 1, 2].map(|k| file.means[k]);
    let covariances = [0, 1, 2].map(|k| {
        let mut m = [[0.0; NUM_FEATURES]; NUM_FEATURES];
        for (i, row) in file.covariances[k].iter().enumerate() {
            m[i] = *row;
        }
        m
    });
    let risk = [0, 1, 2].map(|k| file.risk[k]);
    ClassifierModel::from_parts(
        file.kind,
        file.standardizer,
        means,
        covariances,
        file.templates.into_iter().map(|t| (t.features, t.label)).collect(),
        file.priors,
        risk,
        file.tau,
    )
}

pub fn save_model(model: &ClassifierModel, path: &Path) -> Result<(), ComfortError> {
    std::fs::write(path, model_to_toml(model)).map_err(|e| ComfortError::Io(e.to_string()))
}

pub fn load_model(path: &Path) -> Result<ClassifierModel, ComfortError> {
    let text = std::fs::read_to_string(path).map_err(|e| ComfortError::Io(e.to_string()))?;
    model_from_toml(&text)
}

pub fn write_dataset_string(data: &TrainingSet) -> String {
    let mut out = String::from(DATASET_HEADER);
    out.push('\n');
    for (f, c) in data.samples() {
        let a = f.as_array();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            a[0],
            a[1],
            a[2],
            a[3],
            a[4],
            c.label()
        ));
    }
    out
}

pub fn read_dataset_str(text: &str) -> Result<TrainingSet, ComfortError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == DATASET_HEADER => {}
        _ => {
            return Err(ComfortError::DatasetParse {
                line: 1,
                message: format!("expected header `{DATASET_HEADER}`"),
            })
        }
    }
    let mut samples = Vec::new();
    for (idx, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != NUM_FEATURES + 1 {
            return Err(ComfortError::DatasetParse {
                line: idx + 1,
                message: format!("expected 6 fields, got {}", fields.len()),
            });
        }
        let mut vals = [0.0; NUM_FEATURES];
        for (v, field) in vals.iter_mut().zip(&fields) {
            *v = field.trim().parse().map_err(|e| ComfortError::DatasetParse {
                line: idx + 1,
                message: format!("bad number `{field}`: {e}"),
            })?;
        }
        let label = ComfortClass::from_label(fields[NUM_FEATURES].trim()).ok_or_else(|| {
            ComfortError::DatasetParse {
                line: idx + 1,
                message: format!("unknown label `{}`", fields[NUM_FEATURES]),
            }
        })?;
        samples.push((FeatureVector::from_array(vals), label));
    }
    TrainingSet::new(samples)
}

pub fn read_dataset(path: &Path) -> Result<TrainingSet, ComfortError> {
    let text = std::fs::read_to_string(path).map_err(|e| ComfortError::Io(e.to_string()))?;
    read_dataset_str(&text)
}
