//! Preprocessed network inputs on disk: raw float32 little-endian tensors in
//! CHW order, each with a JSON sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tailkit_core::raster::PreparedView;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSidecar {
    pub transform: String,
    /// `[channels, height, width]`.
    pub shape: [usize; 3],
    pub layout: String,
    pub dtype: String,
    pub data: String,
}

pub fn encode_f32le(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect()
}

pub fn decode_f32le(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

/// Writes `<dir>/<stem>.<transform>.f32` and its `.json` sidecar; returns the
/// data paths in view order.
pub fn write_views(dir: &Path, stem: &str, views: &[PreparedView]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::with_capacity(views.len());
    for v in views {
        let name = format!("{stem}.{}", v.transform.name());
        let data = dir.join(format!("{name}.f32"));
        let meta = dir.join(format!("{name}.json"));
        fs::write(&data, encode_f32le(v.tensor.values())).map_err(|e| Error::io(&data, e))?;
        let sidecar = GridSidecar {
            transform: v.transform.name().to_string(),
            shape: [3, v.tensor.height(), v.tensor.width()],
            layout: "CHW".into(),
            dtype: "float32-le".into(),
            data: format!("{name}.f32"),
        };
        fs::write(&meta, serde_json::to_string_pretty(&sidecar)? + "\n").map_err(|e| Error::io(&meta, e))?;
        written.push(data);
    }
    Ok(written)
}
