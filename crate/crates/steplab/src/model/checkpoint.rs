//! Checkpoints: a JSON manifest next to one embedding-format file per
//! named parameter tensor, under `tensors/`. Tensors narrow to f32 on disk.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{load_embedding_matrix, save_embedding_matrix};

use super::{params::zeros_like, init_params, ModelConfig, ModelError, ModelParams};

const MANIFEST_NAME: &str = "manifest.json";
const TENSOR_DIR: &str = "tensors";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub config: ModelConfig,
    pub seed: u64,
    pub step_count: u64,
    /// Tensor name -> file path relative to the checkpoint directory.
    pub tensors: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub seed: u64,
    pub step_count: u64,
    pub params: ModelParams,
}

/// Writes `dir/manifest.json` plus one tensor file per parameter.
pub fn save_checkpoint(
    dir: &Path,
    config: &ModelConfig,
    params: &ModelParams,
    seed: u64,
    step_count: u64,
) -> Result<(), ModelError> {
    let tensor_dir = dir.join(TENSOR_DIR);
    fs::create_dir_all(&tensor_dir).map_err(|e| io_err(&tensor_dir, e))?;

    let mut tensors = BTreeMap::new();
    for (name, tensor) in params.tensors() {
        let file = format!("{}/{}.emb", TENSOR_DIR, name);
        save_embedding_matrix(tensor, &dir.join(&file))?;
        tensors.insert(name, file);
    }
    let manifest = CheckpointManifest {
        config: config.clone(),
        seed,
        step_count,
        tensors,
    };
    let mpath = dir.join(MANIFEST_NAME);
    let f = fs::File::create(&mpath).map_err(|e| io_err(&mpath, e))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, &manifest).map_err(|e| {
        ModelError::BadConfig(format!("cannot serialize manifest: {}", e))
    })?;
    writeln!(w).map_err(|e| io_err(&mpath, e))?;
    w.flush().map_err(|e| io_err(&mpath, e))
}

/// Loads a checkpoint directory written by [`save_checkpoint`].
pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint, ModelError> {
    let mpath = dir.join(MANIFEST_NAME);
    let f = fs::File::open(&mpath).map_err(|e| io_err(&mpath, e))?;
    let manifest: CheckpointManifest = serde_json::from_reader(BufReader::new(f))
        .map_err(|e| ModelError::BadConfig(format!("bad checkpoint manifest: {}", e)))?;
    manifest.config.validate()?;

    // shapes come from a fresh init; values are overwritten below
    let mut params = zeros_like(&init_params(&manifest.config, 0)?);
    for (name, tensor) in params.tensors_mut() {
        let rel = manifest.tensors.get(&name).ok_or_else(|| {
            ModelError::BadConfig(format!("checkpoint manifest lacks tensor '{}'", name))
        })?;
        let loaded = load_embedding_matrix(&dir.join(rel))?;
        if (loaded.rows(), loaded.cols()) != (tensor.rows(), tensor.cols()) {
            return Err(ModelError::BadConfig(format!(
                "tensor '{}' has shape {}x{}, expected {}x{}",
                name,
                loaded.rows(),
                loaded.cols(),
                tensor.rows(),
                tensor.cols()
            )));
        }
        *tensor = loaded;
    }
    Ok(Checkpoint {
        config: manifest.config,
        seed: manifest.seed,
        step_count: manifest.step_count,
        params,
    })
}

fn io_err(path: &Path, source: std::io::Error) -> ModelError {
    ModelError::Corpus(crate::corpus::CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_roundtrip_within_f32() {
        let config = ModelConfig {
            video_input_dim: 5,
            text_input_dim: 4,
            hidden_dim: 8,
            layers: 1,
            heads: 2,
            max_positions: 6,
            use_text_pe: false,
        };
        let params = init_params(&config, 99).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &config, &params, 99, 1234).unwrap();

        let back = load_checkpoint(dir.path()).unwrap();
        assert_eq!(back.config, config);
        assert_eq!(back.seed, 99);
        assert_eq!(back.step_count, 1234);
        for ((n1, a), (n2, b)) in params.tensors().iter().zip(back.params.tensors().iter()) {
            assert_eq!(n1, n2);
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() < 1e-6, "{}", n1);
            }
        }
    }

    #[test]
    fn checkpoint_same_params_bytes_identical() {
        let config = ModelConfig {
            video_input_dim: 3,
            text_input_dim: 3,
            hidden_dim: 4,
            layers: 1,
            heads: 1,
            max_positions: 4,
            use_text_pe: false,
        };
        let params = init_params(&config, 1).unwrap();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        save_checkpoint(d1.path(), &config, &params, 1, 7).unwrap();
        save_checkpoint(d2.path(), &config, &params, 1, 7).unwrap();
        let m1 = fs::read(d1.path().join("manifest.json")).unwrap();
        let m2 = fs::read(d2.path().join("manifest.json")).unwrap();
        assert_eq!(m1, m2);
        let t1 = fs::read(d1.path().join("tensors/pos_table.emb")).unwrap();
        let t2 = fs::read(d2.path().join("tensors/pos_table.emb")).unwrap();
        assert_eq!(t1, t2);
    }
}
