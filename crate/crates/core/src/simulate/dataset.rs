use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate_pair, SampleMeta, SimConfig};
use crate::camera::write_cameras;
use crate::error::{Error, Result};
use crate::io::write_tensor;
use crate::raster::MODALITIES;
use crate::rng::{derive_seed, streams};

pub const MANIFEST_FILE: &str = "manifest.json";
const META_FILE: &str = "meta.json";
const CAMERAS_FILE: &str = "cameras.json";

/// Tensor files in each sample directory: the five corrupted modalities, then the clean color.
pub const SAMPLE_FILES: [&str; 6] = [
    "corrupted_color.gpbt",
    "corrupted_alpha.gpbt",
    "corrupted_depth.gpbt",
    "corrupted_normal.gpbt",
    "corrupted_uncert.gpbt",
    "clean_color.gpbt",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: usize,
    /// Sample directory relative to the manifest.
    pub dir: String,
    pub corrupted: Vec<String>,
    pub clean: String,
    pub cameras: String,
    pub meta: SampleMeta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedSample {
    pub id: usize,
    pub scene_seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub modalities: Vec<String>,
    pub samples: Vec<ManifestEntry>,
    pub skipped: Vec<SkippedSample>,
}

impl Manifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Directory holding sample `k`, resolved against the manifest's own directory.
    pub fn sample_dir(&self, manifest_path: &Path, k: usize) -> PathBuf {
        manifest_path
            .parent()
            .unwrap_or(Path::new("."))
            .join(&self.samples[k].dir)
    }
}

pub fn sample_seed(master: u64, index: usize) -> u64 {
    derive_seed(derive_seed(master, streams::SAMPLE), index as u64)
}

fn sample_name(id: usize) -> String {
    format!("sample_{id:05}")
}

fn entry(id: usize, meta: SampleMeta) -> ManifestEntry {
    let dir = sample_name(id);
    ManifestEntry {
        id,
        corrupted: SAMPLE_FILES[..5]
            .iter()
            .map(|f| format!("{dir}/{f}"))
            .collect(),
        clean: format!("{dir}/{}", SAMPLE_FILES[5]),
        cameras: format!("{dir}/{CAMERAS_FILE}"),
        dir,
        meta,
    }
}

fn build_one(id: usize, cfg: &SimConfig, out_dir: &Path) -> Result<SampleMeta> {
    let dir = out_dir.join(sample_name(id));
    let meta_path = dir.join(META_FILE);
    if meta_path.exists() {
        let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        return Ok(serde_json::from_str(&text)?);
    }
    let sample = generate_pair::<f32>(sample_seed(cfg.seed, id), cfg)?;
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for (file, video) in SAMPLE_FILES.iter().zip(sample.corrupted.modalities()) {
        write_tensor(dir.join(file), video)?;
    }
    write_tensor(dir.join(SAMPLE_FILES[5]), &sample.clean)?;
    write_cameras(dir.join(CAMERAS_FILE), &sample.cameras)?;
    // meta last: its presence marks a complete sample
    let text = serde_json::to_string_pretty(&sample.meta)?;
    std::fs::write(&meta_path, text).map_err(|e| Error::io(&meta_path, e))?;
    Ok(sample.meta)
}

/// Generates samples `0..n` under `out_dir` in parallel and writes the manifest. Samples with
/// an existing `meta.json` are reused; failures are listed as skipped.
pub fn build_dataset(n: usize, cfg: &SimConfig, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    cfg.validate()?;
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let results: Vec<(usize, Result<SampleMeta>)> = (0..n)
        .into_par_iter()
        .map(|id| (id, build_one(id, cfg, out_dir)))
        .collect();
    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    for (id, r) in results {
        match r {
            Ok(meta) => samples.push(entry(id, meta)),
            Err(e) => skipped.push(SkippedSample {
                id,
                scene_seed: sample_seed(cfg.seed, id),
                error: e.to_string(),
            }),
        }
    }
    let manifest = Manifest {
        seed: cfg.seed,
        modalities: MODALITIES.iter().map(|m| m.to_string()).collect(),
        samples,
        skipped,
    };
    let path = out_dir.join(MANIFEST_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)
        .map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
