//! Refiners turn corrupted GP-Buffer videos along a camera path into clean color videos.

use splatfix_core::raster::render_trajectory;
use splatfix_core::{Camera, GaussianCloud, GpBufferVideo, RasterConfig, Scalar, VideoTensor};
use splatfix_refiner::{refine_video, Real, RefinerModel};

use crate::error::{Result, Stage, StageExt};

pub trait Refiner<T: Scalar> {
    /// Refined color video for `corrupted`, rendered along `cameras`.
    fn refine(
        &self,
        corrupted: &GpBufferVideo<T>,
        cameras: &[Camera<T>],
        seed: u64,
    ) -> Result<VideoTensor<T>>;

    /// Video length the refiner requires, if any.
    fn frames(&self) -> Option<usize> {
        None
    }
}

/// Ignores the corrupted input and renders the ground-truth scene along the path.
#[derive(Clone, Debug)]
pub struct OracleRefiner<T> {
    pub scene: GaussianCloud<T>,
    pub raster: RasterConfig,
}

impl<T: Scalar> Refiner<T> for OracleRefiner<T> {
    fn refine(
        &self,
        _corrupted: &GpBufferVideo<T>,
        cameras: &[Camera<T>],
        _seed: u64,
    ) -> Result<VideoTensor<T>> {
        Ok(render_trajectory(&self.scene, cameras, &self.raster)
            .stage(Stage::Refine)?
            .color)
    }
}

/// A trained flow model integrated with `ode_steps` Euler steps.
#[derive(Clone, Debug)]
pub struct ModelRefiner<'a, T> {
    pub model: &'a RefinerModel<T>,
    pub ode_steps: usize,
}

impl<T: Real> Refiner<T> for ModelRefiner<'_, T> {
    fn refine(
        &self,
        corrupted: &GpBufferVideo<T>,
        _cameras: &[Camera<T>],
        seed: u64,
    ) -> Result<VideoTensor<T>> {
        refine_video(self.model, corrupted, self.ode_steps, seed).stage(Stage::Refine)
    }

    fn frames(&self) -> Option<usize> {
        Some(self.model.cfg.geom.frames)
    }
}
