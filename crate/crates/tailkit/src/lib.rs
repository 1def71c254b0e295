//! File formats, IO and the command-line front end for `tailkit-core`.
//!
//! The numerical work lives in [`tailkit_core`]; this crate reads and writes
//! label/score CSVs, embedding files, PGM rasters, preprocessed grids, model
//! JSON and run manifests, and maps each CLI subcommand onto one library call.

pub mod cli;
pub mod embeddings;
pub mod error;
pub mod grid;
pub mod manifest;
pub mod model;
pub mod pgm;
pub mod prompts;
pub mod table;

pub use error::{Error, Result};
pub use tailkit_core as core;
