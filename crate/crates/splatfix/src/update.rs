//! Reconstruction update: refine novel views along the input path, merge, re-fit.

use serde::{Deserialize, Serialize};
use splatfix_core::optim::{fit, merge_views, FitConfig, LossRecord, View};
use splatfix_core::raster::render_trajectory;
use splatfix_core::rng::{derive_seed, streams};
use splatfix_core::traject::{interpolate, resample, TrajectoryConfig};
use splatfix_core::{Camera, GaussianCloud, RasterConfig, Scalar};

use crate::error::{Error, Result, Stage, StageExt};
use crate::refine::Refiner;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UpdateConfig {
    pub per_segment_samples: usize,
    pub refine_ode_steps: usize,
    pub update_iters: usize,
    pub seed: u64,
    /// Optimizer settings of the re-fit; `iterations` and `seed` are overwritten.
    pub fit: FitConfig,
}

impl Default for UpdateConfig {
    fn default() -> Self {
        Self {
            per_segment_samples: 8,
            refine_ode_steps: 50,
            update_iters: 2000,
            seed: 0,
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

impl UpdateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.per_segment_samples == 0 || self.refine_ode_steps == 0 || self.update_iters == 0 {
            return Err(Error::Config(
                "per_segment_samples, refine_ode_steps and update_iters must be at least 1".into(),
            ));
        }
        self.refit_config().validate().stage(Stage::Fit)
    }

    /// Optimizer settings of the final re-fit.
    pub fn refit_config(&self) -> FitConfig {
        FitConfig {
            iterations: self.update_iters,
            seed: derive_seed(self.seed, streams::UPDATE),
            ..self.fit.clone()
        }
    }
}

#[derive(Clone, Debug)]
pub struct UpdateOutcome<T> {
    pub cloud: GaussianCloud<T>,
    /// Cameras the refiner rendered.
    pub path: Vec<Camera<T>>,
    /// Refined views kept after dropping poses that duplicate an input.
    pub added_views: usize,
    pub log: Vec<LossRecord>,
}

pub fn reconstruct_update<T: Scalar>(
    cloud: &GaussianCloud<T>,
    inputs: &[View<T>],
    refiner: &impl Refiner<T>,
    cfg: &UpdateConfig,
) -> Result<UpdateOutcome<T>> {
    cfg.validate()?;
    let keys: Vec<Camera<T>> = inputs.iter().map(|v| v.camera.clone()).collect();
    let mut path = interpolate(
        &keys,
        &TrajectoryConfig {
            samples_per_segment: cfg.per_segment_samples,
        },
    )
    .stage(Stage::Trajectory)?;
    if let Some(frames) = refiner.frames() {
        path = resample(&path, frames);
    }
    let buffers = render_trajectory(cloud, &path, &cfg.fit.raster).stage(Stage::Render)?;
    let video = refiner.refine(&buffers, &path, derive_seed(cfg.seed, streams::REFINE))?;
    if video.frames != path.len() || video.channels != 3 {
        return Err(Error::Config(format!(
            "refiner returned {:?} for {} cameras",
            video.dims(),
            path.len()
        )));
    }
    let refined = path
        .iter()
        .enumerate()
        .map(|(k, cam)| View::new(cam.clone(), video.frame(k).to_vec()))
        .collect::<splatfix_core::Result<Vec<_>>>()
        .stage(Stage::Refine)?;
    let merged = merge_views(inputs, &refined);
    let added_views = merged.len() - inputs.len();
    let out = fit(cloud, &merged, &cfg.refit_config()).stage(Stage::Fit)?;
    Ok(UpdateOutcome {
        cloud: out.cloud,
        path,
        added_views,
        log: out.log,
    })
}
