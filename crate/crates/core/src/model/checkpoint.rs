use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::params::{ModelParameters, ParamLayout};
use crate::container::{read_container, read_header, write_container};
use crate::error::{Error, Result};

pub const CHECKPOINT_KIND: &str = "checkpoint";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: ModelConfig,
    pub seed: u64,
    pub step: usize,
    pub version: String,
}

pub fn save_checkpoint(path: &Path, params: &ModelParameters, seed: u64, step: usize) -> Result<()> {
    let layout = params.layout();
    let meta = CheckpointMeta {
        config: params.config.clone(),
        seed,
        step,
        version: crate::VERSION.to_string(),
    };
    let named: Vec<(String, _)> = layout.names.iter().cloned().zip(params.tensors.iter()).collect();
    write_container(path, CHECKPOINT_KIND, &meta, &named)
}

/// Reads the checkpoint metadata without touching the tensor blob.
pub fn inspect_checkpoint(path: &Path) -> Result<CheckpointMeta> {
    let (header, _) = read_header(path)?;
    if header.kind != CHECKPOINT_KIND {
        return Err(Error::Format(format!("{}: holds a {}, not a checkpoint", path.display(), header.kind)));
    }
    header.meta_as()
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParameters, CheckpointMeta)> {
    let (header, tensors) = read_container::<f32>(path)?;
    if header.kind != CHECKPOINT_KIND {
        return Err(Error::Format(format!("{}: holds a {}, not a checkpoint", path.display(), header.kind)));
    }
    let meta: CheckpointMeta = header.meta_as()?;
    let layout = ParamLayout::new(&meta.config);
    if tensors.len() != layout.len() || tensors.iter().zip(&layout.names).any(|((n, _), l)| n != l) {
        return Err(Error::Format(format!("{}: tensor names do not match the config", path.display())));
    }
    let params = ModelParameters::from_tensors(meta.config.clone(), tensors.into_iter().map(|(_, t)| t).collect())?;
    Ok((params, meta))
}

#[cfg(test)]
mod tests {
    use super::super::params::init_model;
    use super::*;

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        let params = init_model(&ModelConfig::dyck(5, 64), 3).unwrap();
        save_checkpoint(&p, &params, 3, 17).unwrap();
        let (back, meta) = load_checkpoint(&p).unwrap();
        assert_eq!(meta.step, 17);
        for (a, b) in params.tensors.iter().zip(&back.tensors) {
            assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(inspect_checkpoint(&p).unwrap().config, params.config);
    }

    #[test]
    fn truncated_checkpoint_fails() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        save_checkpoint(&p, &init_model(&ModelConfig::dyck(2, 16), 0).unwrap(), 0, 0).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 100]).unwrap();
        let err = load_checkpoint(&p).unwrap_err().to_string();
        assert!(err.contains("lnf.bias") || err.contains("truncated"), "{err}");
        // the header alone is still readable
        assert!(inspect_checkpoint(&p).is_ok());
    }
}
