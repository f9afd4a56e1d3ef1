//! Versioned, self-describing model file.
//!
//! JSON with a magic string, format version, the frozen feature order,
//! the architecture, optional standardization statistics, and the full
//! f64 parameters. Weight matrices are stored row-major, fan_out x fan_in.
//! Serialized floats use the shortest round-trippable form, so
//! load(save(m)) is bit-identical.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{MLPConfig, MLPModel};
use crate::dataset::{FeatureStats, FEATURE_NAMES};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &str = "solarcast-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    magic: String,
    version: u32,
    feature_order: Vec<String>,
    config: MLPConfig,
    standardization: Option<FeatureStats>,
    weights: Vec<Vec<Vec<f64>>>,
    biases: Vec<Vec<f64>>,
}

/// Writes the model plus optional feature statistics next to it in one file.
pub fn save_model(model: &MLPModel, stats: Option<&FeatureStats>, path: &Path) -> Result<()> {
    let file = ModelFile {
        magic: MODEL_MAGIC.to_string(),
        version: MODEL_FORMAT_VERSION,
        feature_order: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        config: model.config().clone(),
        standardization: stats.cloned(),
        weights: model
            .weights()
            .iter()
            .map(|w| w.rows().into_iter().map(|r| r.to_vec()).collect())
            .collect(),
        biases: model.biases().iter().map(|b| b.to_vec()).collect(),
    };
    let json = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::Internal(format!("model serialization: {e}")))?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

/// Loads a model file, checking magic, version, feature order, and shape
/// chaining before returning. A truncated or foreign file never yields a
/// partial model.
pub fn load_model(path: &Path) -> Result<(MLPModel, Option<FeatureStats>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ModelFile = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if file.magic != MODEL_MAGIC {
        return Err(Error::Format(format!(
            "{}: magic `{}` is not a solarcast model",
            path.display(),
            file.magic
        )));
    }
    if file.version != MODEL_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported model format version {} (expected {})",
            path.display(),
            file.version,
            MODEL_FORMAT_VERSION
        )));
    }
    if file.feature_order != FEATURE_NAMES {
        return Err(Error::Format(format!(
            "{}: feature order {:?} does not match this build's {:?}",
            path.display(),
            file.feature_order,
            FEATURE_NAMES
        )));
    }

    let mut weights = Vec::with_capacity(file.weights.len());
    for (k, rows) in file.weights.iter().enumerate() {
        let fan_out = rows.len();
        let fan_in = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != fan_in) {
            return Err(Error::Format(format!("layer {k}: ragged weight rows")));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        weights.push(
            Array2::from_shape_vec((fan_out, fan_in), flat)
                .map_err(|e| Error::Format(format!("layer {k}: {e}")))?,
        );
    }
    let biases = file.biases.into_iter().map(Array1::from_vec).collect();
    let model = MLPModel::from_parameters(file.config, weights, biases)?;
    Ok((model, file.standardization))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::MLPConfig;

    fn model() -> MLPModel {
        MLPModel::init(&MLPConfig {
            input_dim: 7,
            hidden_widths: vec![5, 3],
            final_relu: true,
            init_seed: 31,
        })
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let m = model();
        save_model(&m, None, &path).unwrap();
        let (loaded, stats) = load_model(&path).unwrap();
        assert!(stats.is_none());
        assert_eq!(loaded.config(), m.config());
        for (a, b) in loaded.weights().iter().zip(m.weights()) {
            assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        for (a, b) in loaded.biases().iter().zip(m.biases()) {
            assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn standardization_stats_travel_with_the_model() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let stats = FeatureStats {
            mean: vec![1.5; 7],
            std: vec![0.25; 7],
            zero_variance: vec![false; 7],
        };
        save_model(&model(), Some(&stats), &path).unwrap();
        let (_, loaded) = load_model(&path).unwrap();
        assert_eq!(loaded, Some(stats));
    }

    #[test]
    fn wrong_magic_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        std::fs::write(
            &path,
            r#"{"magic":"other","version":1,"feature_order":[],"config":{"input_dim":7,"hidden_widths":[1],"final_relu":false,"init_seed":0},"standardization":null,"weights":[],"biases":[]}"#,
        )
        .unwrap();
        assert!(matches!(load_model(&path), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_file_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let m = model();
        save_model(&m, None, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &text[..text.len() / 2]).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Format(_))));
    }

    #[test]
    fn future_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let m = model();
        save_model(&m, None, &path).unwrap();
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace("\"version\": 1", "\"version\": 99");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Format(_))));
    }
}
