//! On-disk model checkpoints: a JSON manifest plus one blob per tensor.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{LossWeights, TrainConfig};
use crate::case_store::blob::{self, BlobEntry};
use crate::case_store::NormStats;
use crate::error::{Error, Result};
use crate::surrogate::{ModelConfig, SurrogateParams};
use crate::tape::Matrix;

pub const CHECKPOINT_KIND: &str = "dualgraph_checkpoint";
const CHECKPOINT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: SurrogateParams,
    pub stats: NormStats,
    pub train_config: TrainConfig,
    /// Epoch the parameters were taken from (1-based, 0 = untrained).
    pub epoch: usize,
    pub val_loss: f64,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    kind: String,
    schema_version: u32,
    model: ModelConfig,
    seed: u64,
    config_hash: String,
    loss_weights: LossWeights,
    train_config: TrainConfig,
    norm_stats: NormStats,
    epoch: usize,
    val_loss: f64,
    parameter_count: usize,
    tensors: Vec<BlobEntry>,
}

/// SHA-256 of the canonical JSON form of a training configuration.
pub fn config_hash(config: &TrainConfig) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl Checkpoint {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut tensors = Vec::with_capacity(self.params.tensors.len());
        for (name, m) in self.params.names.iter().zip(&self.params.tensors) {
            tensors.push(blob::write_f64(dir, name, vec![m.rows, m.cols], &m.data)?);
        }
        let manifest = Manifest {
            kind: CHECKPOINT_KIND.into(),
            schema_version: CHECKPOINT_SCHEMA,
            model: self.params.config.clone(),
            seed: self.train_config.seed,
            config_hash: config_hash(&self.train_config),
            loss_weights: self.train_config.weights,
            train_config: self.train_config.clone(),
            norm_stats: self.stats.clone(),
            epoch: self.epoch,
            val_loss: self.val_loss,
            parameter_count: self.params.count(),
            tensors,
        };
        blob::write_json(&dir.join(crate::case_store::MANIFEST_FILE), &manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(crate::case_store::MANIFEST_FILE);
        if !path.exists() {
            return Err(Error::io(
                &path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "checkpoint manifest not found"),
            ));
        }
        let m: Manifest = blob::read_json(&path)?;
        let bad = |detail: String| Error::Manifest {
            path: path.clone(),
            detail,
        };
        if m.kind != CHECKPOINT_KIND || m.schema_version != CHECKPOINT_SCHEMA {
            return Err(bad(format!("not a checkpoint (kind {}, schema {})", m.kind, m.schema_version)));
        }
        if m.config_hash != config_hash(&m.train_config) {
            return Err(bad("config hash does not match the stored configuration".into()));
        }
        let mut names = Vec::with_capacity(m.tensors.len());
        let mut tensors = Vec::with_capacity(m.tensors.len());
        for entry in &m.tensors {
            let [rows, cols] = entry.shape[..] else {
                return Err(bad(format!("tensor {} is not two-dimensional", entry.name)));
            };
            let data = blob::read_f64(dir, entry)?;
            names.push(entry.name.clone());
            tensors.push(Matrix::from_vec(rows, cols, data));
        }
        Ok(Self {
            params: SurrogateParams::from_parts(m.model, names, tensors)?,
            stats: m.norm_stats,
            train_config: m.train_config,
            epoch: m.epoch,
            val_loss: m.val_loss,
        })
    }
}
