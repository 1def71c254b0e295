//! Prompt banks: per-class prompt texts and, once encoded, embedding files.
//!
//! Manifest schema:
//! `{ "classes": [ { "name": ..., "prompts": [...], "embeddings": "<file>" } ] }`.
//! Class order defines output column order. Embedding paths are relative to
//! the manifest's directory. `prompts` is optional when embeddings are given.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tailkit_core::zeroshot::PromptBank;

use crate::embeddings::load_embeddings;
use crate::error::{Error, Result};

/// Prompt texts for the six out-of-distribution findings.
pub const OOD_PROMPTS_JSON: &str = include_str!("../assets/ood_prompts.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptClass {
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub prompts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptManifest {
    pub classes: Vec<PromptClass>,
}

pub fn ood_prompt_texts() -> PromptManifest {
    serde_json::from_str(OOD_PROMPTS_JSON).expect("bundled prompt bank is valid JSON")
}

/// Accepts a manifest file or a directory containing `manifest.json`.
pub fn resolve_manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join("manifest.json")
    } else {
        path.to_path_buf()
    }
}

pub fn load_manifest(path: &Path) -> Result<PromptManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

/// Loads every class's embeddings and builds a normalized bank. Returns the
/// embedding file paths too, for digests.
pub fn load_prompt_bank(path: &Path) -> Result<(PromptBank, Vec<PathBuf>)> {
    let manifest_path = resolve_manifest_path(path);
    let manifest = load_manifest(&manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut names = Vec::new();
    let mut texts = Vec::new();
    let mut sets = Vec::new();
    let mut files = Vec::new();
    for class in &manifest.classes {
        let rel = class
            .embeddings
            .as_ref()
            .ok_or_else(|| Error::format(&manifest_path, format!("class `{}` has no embeddings file", class.name)))?;
        let file = base.join(rel);
        let set = load_embeddings(&file)?;
        names.push(class.name.clone());
        texts.push(class.prompts.clone());
        sets.push(set);
        files.push(file);
    }
    // Texts are optional; keep them only when every class lists them.
    if texts.iter().any(Vec::is_empty) {
        texts.clear();
    }
    let bank = PromptBank::new(names, texts, sets).map_err(|e| Error::format(&manifest_path, e.to_string()))?;
    Ok((bank, files))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tailkit_core::zeroshot::OOD_CLASSES;

    #[test]
    fn bundled_bank_lists_ood_classes_in_order() {
        let bank = ood_prompt_texts();
        let names: Vec<&str> = bank.classes.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, OOD_CLASSES);
        assert!(bank.classes.iter().all(|c| !c.prompts.is_empty()));
    }

    #[test]
    fn bundled_texts_with_placeholder_vectors() {
        use crate::embeddings::save_embeddings_binary;
        use tailkit_core::data::EmbeddingSet;
        use tailkit_core::math::Matrix;

        let dir = tempfile::tempdir().unwrap();
        let mut manifest = ood_prompt_texts();
        for (c, class) in manifest.classes.iter_mut().enumerate() {
            let k = class.prompts.len();
            // Prompt j of class c points mostly along axis c.
            let rows: Vec<Vec<f64>> = (0..k)
                .map(|j| {
                    (0..8)
                        .map(|d| {
                            if d == c {
                                1.0
                            } else if d == 6 + j % 2 {
                                0.25
                            } else {
                                0.0
                            }
                        })
                        .collect()
                })
                .collect();
            let file = format!("{}.emb", class.name.to_lowercase());
            let ids = (0..k).map(|j| format!("{}-{j}", class.name)).collect();
            save_embeddings_binary(
                dir.path().join(&file),
                &EmbeddingSet::new(ids, Matrix::from_rows(&rows).unwrap()).unwrap(),
            )
            .unwrap();
            class.embeddings = Some(file.into());
        }
        fs::write(
            dir.path().join("manifest.json"),
            serde_json::to_string(&manifest).unwrap(),
        )
        .unwrap();
        let (bank, files) = load_prompt_bank(dir.path()).unwrap();
        assert_eq!(bank.class_names(), OOD_CLASSES);
        assert_eq!(files.len(), 6);
        assert_eq!(bank.prompts()[2], manifest.classes[2].prompts);
    }
}
