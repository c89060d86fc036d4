//! Seeded synthetic experiments shared by the command line and the acceptance suite.

use serde::{Deserialize, Serialize};
use splatfix_core::optim::{fit, render_views, FitConfig, View};
use splatfix_core::rng::{derive_seed, stream_rng, streams};
use splatfix_core::simulate::{init_cloud, make_scene, sparse_subset, InitMode, SceneSpec};
use splatfix_core::{Camera, GaussianCloud, RasterConfig, Scalar};

use crate::error::{Result, Stage, StageExt};
use crate::eval::{evaluate, EvalReport};

fn small_raster() -> RasterConfig {
    RasterConfig {
        tile_size: 8,
        ..RasterConfig::default()
    }
}

/// A scene fitted from a sparse subset of its captures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeskConfig {
    pub scene: SceneSpec,
    pub retained_fraction: f64,
    pub init_mode: InitMode,
    pub corrupt_iters: usize,
    /// Optimizer settings of the sparse fit; `iterations` and `seed` are overwritten.
    pub fit: FitConfig,
}

impl Default for DeskConfig {
    fn default() -> Self {
        Self {
            scene: SceneSpec {
                splats: Some(200),
                frames: Some(40),
                ..SceneSpec::default()
            },
            retained_fraction: 0.1,
            init_mode: InitMode::RandomPoints,
            corrupt_iters: 500,
            fit: FitConfig {
                raster: small_raster(),
                ..FitConfig::default()
            },
        }
    }
}

#[derive(Clone, Debug)]
pub struct DeskScene<T> {
    pub ground_truth: GaussianCloud<T>,
    /// Every capture, rendered from the ground truth.
    pub views: Vec<View<T>>,
    pub retained: Vec<usize>,
    pub held_out: Vec<usize>,
    pub corrupted: GaussianCloud<T>,
}

impl<T: Scalar> DeskScene<T> {
    pub fn input_views(&self) -> Vec<View<T>> {
        self.retained
            .iter()
            .map(|&i| self.views[i].clone())
            .collect()
    }

    pub fn held_out_views(&self) -> Vec<View<T>> {
        self.held_out
            .iter()
            .map(|&i| self.views[i].clone())
            .collect()
    }
}

/// Ground truth, rendered captures and the retained/held-out split, without the sparse fit.
/// The returned scene's `corrupted` cloud is the ground truth.
pub fn desk_split<T: Scalar>(seed: u64, cfg: &DeskConfig) -> Result<DeskScene<T>> {
    let (gt, captures) = make_scene::<T>(seed, &cfg.scene);
    let views = render_views(&gt, &captures, &cfg.fit.raster).stage(Stage::Scene)?;
    let retained = sparse_subset(
        captures.len(),
        cfg.retained_fraction,
        &mut stream_rng(seed, streams::SUBSET),
    )
    .stage(Stage::Scene)?;
    let held_out = (0..captures.len())
        .filter(|i| retained.binary_search(i).is_err())
        .collect();
    Ok(DeskScene {
        corrupted: gt.clone(),
        ground_truth: gt,
        views,
        retained,
        held_out,
    })
}

pub fn desk_scene<T: Scalar>(seed: u64, cfg: &DeskConfig) -> Result<DeskScene<T>> {
    let mut scene = desk_split(seed, cfg)?;
    let init = init_cloud(
        &scene.ground_truth,
        cfg.init_mode,
        &mut stream_rng(seed, streams::CORRUPT_INIT),
    );
    let fit_cfg = FitConfig {
        iterations: cfg.corrupt_iters,
        seed: derive_seed(seed, streams::FIT),
        ..cfg.fit.clone()
    };
    scene.corrupted = fit(&init, &scene.input_views(), &fit_cfg)
        .stage(Stage::Fit)?
        .cloud;
    Ok(scene)
}

/// Dense-view fit of a synthetic scene, scored on held-out captures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitExperiment {
    pub scene: SceneSpec,
    pub train_views: usize,
    /// Every `hold_every`-th capture (offset 1) is held out.
    pub hold_every: usize,
    pub fit: FitConfig,
}

impl Default for FitExperiment {
    fn default() -> Self {
        Self {
            scene: SceneSpec {
                width: 64,
                height: 64,
                splats: Some(200),
                frames: Some(30),
                sh_degree: 1,
            },
            train_views: 20,
            hold_every: 3,
            fit: FitConfig {
                seed: 3,
                ..FitConfig::default()
            },
        }
    }
}

#[derive(Clone, Debug)]
pub struct FitExperimentOutcome<T> {
    pub ground_truth: GaussianCloud<T>,
    pub fitted: GaussianCloud<T>,
    pub train_cameras: Vec<Camera<T>>,
    pub held_out: Vec<View<T>>,
    pub report: EvalReport,
}

pub fn fit_experiment<T: Scalar>(
    seed: u64,
    cfg: &FitExperiment,
) -> Result<FitExperimentOutcome<T>> {
    if cfg.hold_every < 2 || cfg.train_views == 0 {
        return Err(crate::Error::Config(
            "hold_every must be at least 2 and train_views positive".into(),
        ));
    }
    let (gt, cams) = make_scene::<T>(seed, &cfg.scene);
    let held = |i: usize| i % cfg.hold_every == 1;
    let train: Vec<_> = cams
        .iter()
        .enumerate()
        .filter(|(i, _)| !held(*i))
        .map(|(_, c)| c.clone())
        .take(cfg.train_views)
        .collect();
    let held_cams: Vec<_> = cams
        .iter()
        .enumerate()
        .filter(|(i, _)| held(*i))
        .map(|(_, c)| c.clone())
        .collect();
    let views = render_views(&gt, &train, &cfg.fit.raster).stage(Stage::Scene)?;
    let held_out = render_views(&gt, &held_cams, &cfg.fit.raster).stage(Stage::Scene)?;
    let init = init_cloud(
        &gt,
        InitMode::PointsFromScene,
        &mut stream_rng(seed, streams::CLEAN_INIT),
    );
    let fitted = fit(&init, &views, &cfg.fit).stage(Stage::Fit)?.cloud;
    let report = evaluate(&fitted, &held_out, &cfg.fit.raster)?;
    Ok(FitExperimentOutcome {
        ground_truth: gt,
        fitted,
        train_cameras: train,
        held_out,
        report,
    })
}
