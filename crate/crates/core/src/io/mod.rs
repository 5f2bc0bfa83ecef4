//! Image files, dataset directories, configuration files and run manifests.

pub mod config;
pub mod dataset;
pub mod manifest;
pub mod pnm;

pub use config::{ConfigError, DistortionSettings};
pub use dataset::{load_dataset, load_scene, write_scene, DatasetError, Scene};
pub use manifest::{content_hash, RunManifest, Throughput};
pub use pnm::{decode_pnm, encode_pnm, read_image, write_image, PnmError};
