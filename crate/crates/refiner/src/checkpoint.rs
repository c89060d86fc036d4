//! Checkpoint directories: `config.json` plus every parameter flattened into `params.gpbt`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use splatfix_core::io::{read_raw, write_raw, Tensor};

use crate::error::{Error, Result};
use crate::mat::{Mat, Real};
use crate::model::{ModelConfig, RefinerModel};

pub const CONFIG_FILE: &str = "config.json";
pub const PARAMS_FILE: &str = "params.gpbt";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: [usize; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointConfig {
    pub model: ModelConfig,
    /// Training steps completed when saved.
    pub step: usize,
    pub params: Vec<ParamEntry>,
}

pub fn save<T: Real>(model: &RefinerModel<T>, step: usize, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", dir.display())))?;
    let params = model
        .store
        .iter()
        .map(|p| ParamEntry {
            name: p.name.clone(),
            shape: [p.value.rows, p.value.cols],
        })
        .collect();
    let data: Vec<f32> = model
        .store
        .iter()
        .flat_map(|p| p.value.data.iter().map(|v| v.as_f64() as f32))
        .collect();
    write_raw(dir.join(PARAMS_FILE), &Tensor::new(vec![data.len()], data)?)?;
    let cfg = CheckpointConfig {
        model: model.cfg.clone(),
        step,
        params,
    };
    let path = dir.join(CONFIG_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&cfg)?)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    Ok(())
}

pub fn read_config(dir: impl AsRef<Path>) -> Result<CheckpointConfig> {
    let path = dir.as_ref().join(CONFIG_FILE);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Loads a checkpoint; names and shapes must match a freshly built model of the stored config.
pub fn load<T: Real>(dir: impl AsRef<Path>) -> Result<(RefinerModel<T>, CheckpointConfig)> {
    let dir = dir.as_ref();
    let cfg = read_config(dir)?;
    let mut model = RefinerModel::new(cfg.model.clone())?;
    let tensor = read_raw(dir.join(PARAMS_FILE))?;
    if model.store.len() != cfg.params.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint lists {} parameters, model has {}",
            cfg.params.len(),
            model.store.len()
        )));
    }
    let mut values = Vec::with_capacity(cfg.params.len());
    let mut off = 0;
    for (entry, p) in cfg.params.iter().zip(model.store.iter()) {
        if entry.name != p.name {
            return Err(Error::Checkpoint(format!(
                "expected parameter {}, found {}",
                p.name, entry.name
            )));
        }
        let [r, c] = entry.shape;
        let end = off + r * c;
        if end > tensor.data.len() {
            return Err(Error::Checkpoint("parameter file is truncated".into()));
        }
        let data = tensor.data[off..end]
            .iter()
            .map(|v| T::lit(*v as f64))
            .collect();
        values.push(Mat::from_vec(r, c, data)?);
        off = end;
    }
    if off != tensor.data.len() {
        return Err(Error::Checkpoint(
            "parameter file has trailing values".into(),
        ));
    }
    model.store.load_values(values)?;
    Ok((model, cfg))
}
