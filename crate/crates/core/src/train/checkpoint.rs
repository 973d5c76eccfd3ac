//! Checkpoint directories: `manifest.json` plus `params.bin`, a tensor
//! archive holding every parameter under its canonical name and its
//! momentum buffer under `momentum.<name>`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::step::TrainState;
use crate::binio::{self, read_archive, sha256_file, write_archive};
use crate::engine::Tensor;
use crate::error::{Error, Result};
use crate::model::{ArchitectureConfig, Model, ModelParams};

pub const CHECKPOINT_FORMAT: &str = "persemon-checkpoint";
const PARAMS_FILE: &str = "params.bin";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub version: u32,
    pub arch: ArchitectureConfig,
    /// Completed optimization steps.
    pub step: usize,
    pub seed: u64,
    pub train: TrainConfig,
    pub params_sha256: String,
}

pub fn save_checkpoint(dir: &Path, state: &TrainState, config: &TrainConfig) -> Result<CheckpointManifest> {
    std::fs::create_dir_all(dir)?;
    let momentum: Vec<(String, &Tensor)> = state
        .momentum
        .leaves()
        .into_iter()
        .map(|(n, _, t)| (format!("momentum.{n}"), t))
        .collect();
    let mut entries: Vec<(&str, &Tensor)> = Vec::new();
    let params = state.params.leaves();
    entries.extend(params.iter().map(|(n, _, t)| (n.as_str(), *t)));
    entries.extend(momentum.iter().map(|(n, t)| (n.as_str(), *t)));
    let path = dir.join(PARAMS_FILE);
    write_archive(&path, &entries)?;
    let manifest = CheckpointManifest {
        format: CHECKPOINT_FORMAT.into(),
        version: 1,
        arch: config.arch.clone(),
        step: state.step,
        seed: config.seed,
        train: config.clone(),
        params_sha256: sha256_file(&path)?,
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

fn fill(target: &mut ModelParams, entries: &mut Vec<(String, Tensor)>, prefix: &str, path: &Path) -> Result<()> {
    for (name, _, t) in target.leaves_mut() {
        let full = format!("{prefix}{name}");
        let loaded = binio::take(entries, &full, path)?;
        if loaded.shape() != t.shape() {
            return Err(Error::ArchitectureMismatch(format!(
                "{full} has shape {:?}, architecture needs {:?}",
                loaded.shape(),
                t.shape()
            )));
        }
        *t = loaded;
    }
    Ok(())
}

/// Reads a checkpoint. When `expected` is given, the stored architecture
/// must equal it.
pub fn load_checkpoint(
    dir: &Path,
    expected: Option<&ArchitectureConfig>,
) -> Result<(TrainState, CheckpointManifest)> {
    let mpath = dir.join("manifest.json");
    let manifest: CheckpointManifest = serde_json::from_slice(&std::fs::read(&mpath)?)?;
    if manifest.format != CHECKPOINT_FORMAT || manifest.version != 1 {
        return Err(Error::Format {
            path: mpath,
            message: "not a version-1 checkpoint manifest".into(),
        });
    }
    if let Some(arch) = expected {
        if *arch != manifest.arch {
            return Err(Error::ArchitectureMismatch(format!(
                "checkpoint was trained with {:?}, requested {:?}",
                manifest.arch, arch
            )));
        }
    }
    manifest.arch.validate()?;
    let path = dir.join(PARAMS_FILE);
    if sha256_file(&path)? != manifest.params_sha256 {
        return Err(Error::Format {
            path,
            message: "checksum mismatch".into(),
        });
    }
    let mut entries = read_archive(&path)?;
    let mut params = ModelParams::init(&manifest.arch, 0);
    let mut momentum = params.clone();
    fill(&mut params, &mut entries, "", &path)?;
    fill(&mut momentum, &mut entries, "momentum.", &path)?;
    if let Some((name, _)) = entries.first() {
        return Err(Error::ArchitectureMismatch(format!("unexpected tensor `{name}` in checkpoint")));
    }
    let state = TrainState {
        params,
        momentum,
        step: manifest.step,
    };
    Ok((state, manifest))
}

/// Loads only what inference needs.
pub fn load_model(dir: &Path, expected: Option<&ArchitectureConfig>) -> Result<Model> {
    let (state, manifest) = load_checkpoint(dir, expected)?;
    Ok(Model {
        arch: manifest.arch,
        params: state.params,
    })
}
