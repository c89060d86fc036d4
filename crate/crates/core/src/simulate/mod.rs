//! Paired training data: procedural scenes, clean and corrupted fits, and GP-Buffer videos
//! rendered along a trajectory through the retained views.

mod dataset;
mod degrade;
mod init;
mod scene;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::metrics::psnr;
use crate::optim::{fit, render_views, FitConfig};
use crate::raster::{render_trajectory, GpBufferVideo, RasterConfig};
use crate::rng::{derive_seed, stream_rng, streams};
use crate::scalar::Scalar;
use crate::traject::{interpolate, resample, TrajectoryConfig};
use crate::video::VideoTensor;

pub use dataset::{
    build_dataset, Manifest, ManifestEntry, SkippedSample, MANIFEST_FILE, SAMPLE_FILES,
};
pub use degrade::{
    corrupt_feedforward, Degradation, CLUSTER_OFFSET_SIGMA, ELONGATED_FRACTION, ELONGATION,
    MAX_COLOR_SHIFT, OPACITY_SCALE_RANGE,
};
pub use init::{init_cloud, retained_count, sparse_subset, InitMode, INIT_OPACITY};
pub use scene::{make_scene, SceneSpec, SCENE_FAR, SCENE_NEAR};

/// Reference step counts for underfit corruption; divided by `iter_scale`.
pub const CORRUPT_ITER_CHOICES: [usize; 3] = [3000, 7000, 30000];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegradeMode {
    None,
    FeedforwardSynthetic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub width: usize,
    pub height: usize,
    /// Output video length.
    pub frames: usize,
    pub retained_fraction: f64,
    /// Drawn uniformly per sample when absent.
    pub init_mode: Option<InitMode>,
    /// Drawn from [`CORRUPT_ITER_CHOICES`] / `iter_scale` when absent.
    pub corrupt_iters: Option<usize>,
    pub iter_scale: usize,
    pub clean_iters: usize,
    pub degrade_mode: DegradeMode,
    pub samples_per_segment: usize,
    pub seed: u64,
    pub scene: SceneSpec,
    /// Optimizer settings shared by both fits; `iterations` and `seed` are overwritten.
    pub fit: FitConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            width: 32,
            height: 32,
            frames: 8,
            retained_fraction: 0.05,
            init_mode: None,
            corrupt_iters: None,
            iter_scale: 10,
            clean_iters: 4000,
            degrade_mode: DegradeMode::None,
            samples_per_segment: 8,
            seed: 0,
            scene: SceneSpec::default(),
            fit: FitConfig {
                raster: RasterConfig {
                    tile_size: 8,
                    ..RasterConfig::default()
                },
                ..FitConfig::default()
            },
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.retained_fraction > 0.0 && self.retained_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "retained_fraction {} outside (0, 1]",
                self.retained_fraction
            )));
        }
        if self.width == 0 || self.height == 0 || self.frames == 0 {
            return Err(Error::Config(
                "width, height and frames must be positive".into(),
            ));
        }
        if self.iter_scale == 0 || self.clean_iters == 0 || self.samples_per_segment == 0 {
            return Err(Error::Config(
                "iter_scale, clean_iters and samples_per_segment must be positive".into(),
            ));
        }
        if let Some(c) = self.corrupt_iters {
            if c == 0 {
                return Err(Error::Config("corrupt_iters must be positive".into()));
            }
            if self.degrade_mode == DegradeMode::None && c > self.clean_iters {
                return Err(Error::Config(format!(
                    "corrupt_iters {c} exceeds clean_iters {} without a degradation",
                    self.clean_iters
                )));
            }
        }
        if self.degrade_mode == DegradeMode::None {
            if let Some(m) = self.iter_choices().into_iter().max() {
                if self.corrupt_iters.is_none() && m > self.clean_iters {
                    return Err(Error::Config(format!(
                        "drawn corrupt_iters can reach {m}, above clean_iters {}",
                        self.clean_iters
                    )));
                }
            }
        }
        self.fit.validate()
    }

    pub fn iter_choices(&self) -> Vec<usize> {
        CORRUPT_ITER_CHOICES
            .iter()
            .map(|c| (c / self.iter_scale).max(1))
            .collect()
    }

    fn scene_spec(&self) -> SceneSpec {
        SceneSpec {
            width: self.width,
            height: self.height,
            ..self.scene.clone()
        }
    }
}

/// What a sample was built from. PSNR values are over the whole trajectory video.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub scene_id: u64,
    pub seed: u64,
    pub init_mode: InitMode,
    pub retained_fraction: f64,
    pub retained_indices: Vec<usize>,
    pub capture_frames: usize,
    pub splats: usize,
    pub corrupt_iters: usize,
    pub clean_iters: usize,
    pub degrade_mode: DegradeMode,
    /// Present only for the synthetic feed-forward stand-in.
    pub degradation: Option<DegradationMeta>,
    #[serde(with = "crate::io::inf_f64")]
    pub psnr_clean_vs_gt: f64,
    #[serde(with = "crate::io::inf_f64")]
    pub psnr_corrupted_vs_gt: f64,
    #[serde(with = "crate::io::inf_f64")]
    pub psnr_corrupted_vs_clean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradationMeta {
    pub synthetic: bool,
    pub opacity_scale: f64,
    pub color_shift: [f64; 3],
    pub elongated: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairedSample<T> {
    pub corrupted: GpBufferVideo<T>,
    pub clean: VideoTensor<T>,
    pub cameras: Vec<Camera<T>>,
    pub meta: SampleMeta,
}

/// Builds one paired sample from the scene with seed `scene_seed`.
///
/// Both fits start from the same initialization stream and optimizer seed, so with all views
/// retained, equal step counts and `points_from_scene` the two fits coincide.
pub fn generate_pair<T: Scalar>(scene_seed: u64, cfg: &SimConfig) -> Result<PairedSample<T>> {
    cfg.validate()?;
    let (gt, captures) = make_scene::<T>(scene_seed, &cfg.scene_spec());
    let raster = &cfg.fit.raster;
    let views = render_views(&gt, &captures, raster)?;

    let mut draws = stream_rng(scene_seed, streams::DRAWS);
    let init_mode = cfg
        .init_mode
        .unwrap_or_else(|| InitMode::ALL[draws.random_range(0..InitMode::ALL.len())]);
    let corrupt_iters = cfg.corrupt_iters.unwrap_or_else(|| {
        let choices = cfg.iter_choices();
        choices[draws.random_range(0..choices.len())]
    });

    let fit_cfg = |iters: usize| FitConfig {
        iterations: iters,
        seed: derive_seed(scene_seed, streams::FIT),
        ..cfg.fit.clone()
    };

    let clean_init = init_cloud(
        &gt,
        InitMode::PointsFromScene,
        &mut stream_rng(scene_seed, streams::CLEAN_INIT),
    );
    let clean = fit(&clean_init, &views, &fit_cfg(cfg.clean_iters))?.cloud;

    let retained = sparse_subset(
        captures.len(),
        cfg.retained_fraction,
        &mut stream_rng(scene_seed, streams::SUBSET),
    )?;
    let sparse_views: Vec<_> = retained.iter().map(|&i| views[i].clone()).collect();
    let corrupt_init = init_cloud(
        &gt,
        init_mode,
        &mut stream_rng(scene_seed, streams::CLEAN_INIT),
    );
    let mut corrupted = fit(&corrupt_init, &sparse_views, &fit_cfg(corrupt_iters))?.cloud;

    let degradation = match cfg.degrade_mode {
        DegradeMode::None => None,
        DegradeMode::FeedforwardSynthetic => {
            let (c, d) =
                corrupt_feedforward(&corrupted, &mut stream_rng(scene_seed, streams::DEGRADE));
            corrupted = c;
            Some(DegradationMeta {
                synthetic: true,
                opacity_scale: d.opacity_scale,
                color_shift: d.color_shift,
                elongated: d.elongated.len(),
            })
        }
    };

    let keys: Vec<Camera<T>> = retained.iter().map(|&i| captures[i].clone()).collect();
    let path = interpolate(
        &keys,
        &TrajectoryConfig {
            samples_per_segment: cfg.samples_per_segment,
        },
    )?;
    let cameras = resample(&path, cfg.frames);

    let corrupted_video = render_trajectory(&corrupted, &cameras, raster)?;
    let clean_video = render_trajectory(&clean, &cameras, raster)?.color;
    let gt_video = render_trajectory(&gt, &cameras, raster)?.color;

    let meta = SampleMeta {
        scene_id: scene_seed,
        seed: cfg.seed,
        init_mode,
        retained_fraction: cfg.retained_fraction,
        retained_indices: retained,
        capture_frames: captures.len(),
        splats: gt.len(),
        corrupt_iters,
        clean_iters: cfg.clean_iters,
        degrade_mode: cfg.degrade_mode,
        degradation,
        psnr_clean_vs_gt: psnr(&clean_video.data, &gt_video.data)?.as_f64(),
        psnr_corrupted_vs_gt: psnr(&corrupted_video.color.data, &gt_video.data)?.as_f64(),
        psnr_corrupted_vs_clean: psnr(&corrupted_video.color.data, &clean_video.data)?.as_f64(),
    };
    Ok(PairedSample {
        corrupted: corrupted_video,
        clean: clean_video,
        cameras,
        meta,
    })
}
