//! Model persistence: JSON with enough to rebuild every learner exactly.
//!
//! Hidden layers are not stored; they regenerate bit-identically from
//! `(seed, input_dim, hidden_dim, activation)`. Output weights are stored
//! row-major; serde_json prints floats in shortest round-trip form, so a
//! reloaded model predicts identically to the trained one.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataio::StandardizationParams;
use crate::elm::{Activation, BaseLearner, HiddenLayer};
use crate::error::{NcelmError, Result};
use crate::ncelm::{NcelmConfig, NcelmModel};

#[derive(Debug, Serialize, Deserialize)]
struct SerializedLearner {
    seed: u64,
    #[serde(rename = "K")]
    input_dim: usize,
    #[serde(rename = "D")]
    hidden_dim: usize,
    activation: Activation,
    /// Row-major hidden_dim x n_classes.
    beta: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SerializedModel {
    config: NcelmConfig,
    standardization: StandardizationParams,
    class_labels: Vec<String>,
    learners: Vec<SerializedLearner>,
}

impl NcelmModel {
    pub fn to_json_string(&self) -> Result<String> {
        let ser = SerializedModel {
            config: self.config.clone(),
            standardization: self.standardization.clone(),
            class_labels: self.class_labels.clone(),
            learners: self
                .learners
                .iter()
                .map(|l| SerializedLearner {
                    seed: l.hidden.seed,
                    input_dim: l.hidden.input_dim(),
                    hidden_dim: l.hidden.hidden_dim(),
                    activation: l.hidden.activation,
                    beta: l.beta.iter().cloned().collect(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&ser)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let ser: SerializedModel = serde_json::from_str(text)?;
        let n_classes = ser.class_labels.len();
        let mut learners = Vec::with_capacity(ser.learners.len());
        for (i, l) in ser.learners.into_iter().enumerate() {
            if l.beta.len() != l.hidden_dim * n_classes {
                return Err(NcelmError::ModelMismatch {
                    reason: format!(
                        "learner {i}: beta has {} entries, expected {} ({} x {})",
                        l.beta.len(),
                        l.hidden_dim * n_classes,
                        l.hidden_dim,
                        n_classes
                    ),
                });
            }
            let hidden = HiddenLayer::new(l.seed, l.input_dim, l.hidden_dim, l.activation);
            let beta = Array2::from_shape_vec((l.hidden_dim, n_classes), l.beta)
                .expect("length checked above");
            learners.push(BaseLearner { hidden, beta });
        }
        if learners.is_empty() {
            return Err(NcelmError::ModelMismatch {
                reason: "model has no learners".into(),
            });
        }
        Ok(NcelmModel {
            learners,
            config: ser.config,
            standardization: ser.standardization,
            class_labels: ser.class_labels,
        })
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = self.to_json_string()?;
        std::fs::write(path, text).map_err(|e| NcelmError::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(NcelmError::MissingFile {
                path: path.to_path_buf(),
            });
        }
        let text = std::fs::read_to_string(path).map_err(|e| NcelmError::io(path, e))?;
        Self::from_json_str(&text)
    }
}
