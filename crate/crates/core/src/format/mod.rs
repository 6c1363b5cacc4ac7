//! On-disk formats: JSON model manifests, `NNWB` weight blobs, and `TBIN`
//! tensor files. These are the exchange formats with external exporters.

mod manifest;
pub mod nnwb;
mod reader;
pub mod tbin;

use std::fs;
use std::path::Path;

pub(crate) use manifest::same_pad_low;
pub use manifest::{LayerKind, LayerSpec, Model, ModelManifest, Padding, Task};
pub use tbin::{Labels, TbinData};

use crate::error::Result;
use crate::tensor::Tensor;

pub fn load_model(
    manifest_path: impl AsRef<Path>,
    weights_path: impl AsRef<Path>,
) -> Result<Model> {
    let json = fs::read(manifest_path)?;
    let blob = fs::read(weights_path)?;
    model_from_bytes(&json, &blob)
}

pub fn model_from_bytes(manifest_json: &[u8], weights_blob: &[u8]) -> Result<Model> {
    let mut manifest: ModelManifest = serde_json::from_slice(manifest_json)?;
    manifest.weights = nnwb::decode_weights(weights_blob)?;
    Model::new(manifest)
}

/// Writes the manifest as pretty JSON and the weights as `NNWB`. The
/// manifest is validated first, so nothing is written for an invalid model.
pub fn save_model(
    manifest: &ModelManifest,
    manifest_path: impl AsRef<Path>,
    weights_path: impl AsRef<Path>,
) -> Result<()> {
    manifest.validate()?;
    let mut json = serde_json::to_vec_pretty(manifest)?;
    json.push(b'\n');
    let blob = nnwb::encode_weights(&manifest.weights)?;
    fs::write(manifest_path, json)?;
    fs::write(weights_path, blob)?;
    Ok(())
}

pub fn load_tensor_file(path: impl AsRef<Path>) -> Result<Tensor> {
    tbin::decode_tensor(&fs::read(path)?)
}

pub fn save_tensor_file(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, tbin::encode_f32(t)?)?;
    Ok(())
}

pub fn load_class_file(path: impl AsRef<Path>) -> Result<Vec<u32>> {
    tbin::decode_classes(&fs::read(path)?)
}

pub fn save_class_file(classes: &[u32], path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, tbin::encode_u32(&[classes.len()], classes)?)?;
    Ok(())
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<Labels> {
    tbin::decode_labels(&fs::read(path)?)
}

pub fn save_labels(labels: &Labels, path: impl AsRef<Path>) -> Result<()> {
    match labels {
        Labels::Classes(c) => save_class_file(c, path),
        Labels::Targets(t) => save_tensor_file(t, path),
    }
}
