//! Linear model JSON: class names, row-major per-class weight rows, bias.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tailkit_core::math::Matrix;
use tailkit_core::trainer::LinearModel;

use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    class_names: Vec<String>,
    feature_dim: usize,
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

pub fn model_to_json(model: &LinearModel) -> Result<String> {
    let file = ModelFile {
        class_names: model.class_names.clone(),
        feature_dim: model.dim(),
        weights: (0..model.n_classes()).map(|c| model.weights.row(c).to_vec()).collect(),
        bias: model.bias.clone(),
    };
    Ok(serde_json::to_string_pretty(&file)? + "\n")
}

pub fn model_from_json(path: &Path, text: &str) -> Result<LinearModel> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::format(path, e.to_string()))?;
    if file.weights.len() != file.class_names.len() || file.bias.len() != file.class_names.len() {
        return Err(Error::format(path, "weights, bias and class names disagree in length"));
    }
    let weights = if file.weights.is_empty() {
        Matrix::zeros(0, file.feature_dim)
    } else {
        Matrix::from_rows(&file.weights)?
    };
    if weights.cols() != file.feature_dim {
        return Err(Error::format(path, "weight rows do not match feature_dim"));
    }
    Ok(LinearModel {
        weights,
        bias: file.bias,
        class_names: file.class_names,
    })
}

pub fn save_model(path: impl AsRef<Path>, model: &LinearModel) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_json(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<LinearModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(path, &text)
}
