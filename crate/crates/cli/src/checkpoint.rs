//! Weight checkpoints: a JSON manifest naming every parameter with its
//! shape and byte offset into a companion binary of concatenated GGT1
//! records. Save → load → save reproduces both files bit for bit.

use std::fs;
use std::path::Path;

use ggt_core::backbone::{build, ModelConfig, ModelWeights};
use ggt_core::gradcheck::ParamSet;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::ggt1;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const WEIGHTS_FILE: &str = "weights.bin";
pub const FORMAT: &str = "ggt-checkpoint-v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub byte_len: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub model: String,
    pub total_params: u64,
    pub entries: Vec<ManifestEntry>,
}

pub fn save(dir: &Path, model: &str, weights: &ModelWeights<f32>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::new();
    let mut blob: Vec<u8> = Vec::new();
    weights.for_each_param(&mut |name, p| {
        let bytes = ggt1::tensor_bytes(&p.value);
        entries.push(ManifestEntry {
            name: name.to_string(),
            shape: p.value.shape().to_vec(),
            offset: blob.len() as u64,
            byte_len: bytes.len() as u64,
        });
        blob.extend_from_slice(&bytes);
    });
    let manifest = Manifest {
        format: FORMAT.to_string(),
        model: model.to_string(),
        total_params: weights.param_count(),
        entries,
    };
    fs::write(dir.join(WEIGHTS_FILE), blob)?;
    let mut json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::Input(format!("manifest serialization failed: {e}")))?;
    json.push('\n');
    fs::write(dir.join(MANIFEST_FILE), json)?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("malformed manifest: {e}")))?;
    if manifest.format != FORMAT {
        return Err(CliError::Input(format!(
            "unsupported checkpoint format '{}'",
            manifest.format
        )));
    }
    Ok(manifest)
}

/// Load a checkpoint into the structure implied by `cfg`. Every parameter
/// the model owns must be present with a matching shape; extras are
/// rejected.
pub fn load(dir: &Path, cfg: &ModelConfig) -> Result<ModelWeights<f32>> {
    let manifest = read_manifest(dir)?;
    let blob = fs::read(dir.join(WEIGHTS_FILE))?;

    let mut weights: ModelWeights<f32> = build(cfg, 0)?;
    let mut used = vec![false; manifest.entries.len()];
    let mut missing = Vec::new();
    let mut failure: Option<CliError> = None;

    weights.for_each_param_mut(&mut |name, p| {
        if failure.is_some() {
            return;
        }
        let Some(idx) = manifest.entries.iter().position(|e| e.name == name) else {
            missing.push(name.to_string());
            return;
        };
        used[idx] = true;
        let entry = &manifest.entries[idx];
        let start = entry.offset as usize;
        let end = start + entry.byte_len as usize;
        if end > blob.len() {
            failure = Some(CliError::Input(format!(
                "checkpoint entry {name} points past the end of {WEIGHTS_FILE}"
            )));
            return;
        }
        match ggt1::read_tensor(&blob[start..end]) {
            Ok(tensor) if tensor.shape() == p.value.shape() => {
                p.value = tensor;
                p.zero_grad();
            }
            Ok(tensor) => {
                failure = Some(CliError::Input(format!(
                    "checkpoint entry {name} has shape {:?}, model expects {:?}",
                    tensor.shape(),
                    p.value.shape()
                )));
            }
            Err(e) => failure = Some(e),
        }
    });

    if let Some(e) = failure {
        return Err(e);
    }
    if !missing.is_empty() {
        return Err(CliError::Input(format!(
            "checkpoint is missing parameters: {}",
            missing.join(", ")
        )));
    }
    if let Some(idx) = used.iter().position(|u| !u) {
        return Err(CliError::Input(format!(
            "checkpoint carries unknown parameter '{}'",
            manifest.entries[idx].name
        )));
    }
    Ok(weights)
}
