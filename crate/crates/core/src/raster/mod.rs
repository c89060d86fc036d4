//! Forward rasterization of the five-modality GP-Buffer.
//!
//! Splats are projected, depth sorted (ties broken by primitive index) and alpha blended
//! front to back. The tiled renderer bins splats by their conservative pixel extent and
//! renders tiles independently; [`render_reference`] walks every splat at every pixel and
//! serves as the correctness oracle.

mod normals;
pub(crate) mod project;
mod reference;
pub(crate) mod tile;

use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::cloud::GaussianCloud;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::video::VideoTensor;

pub use normals::compute_normals;
pub use project::{project_splat, project_splats, sort_splats};
pub use reference::render_reference;
pub use tile::{blend_pixel, render_gpbuffer, PixelAccum, TileBins};

/// Upper bound on a single splat's blend weight, keeping `1 - γ` strictly positive.
pub const MAX_GAMMA: f64 = 0.999_999_9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RasterConfig {
    pub tile_size: usize,
    /// Minimum per-splat contribution γ that is accumulated.
    pub alpha_cutoff: f64,
    /// Front-to-back traversal stops once transmittance drops below this.
    pub transmittance_floor: f64,
    /// Added to the diagonal of every projected covariance (px²).
    pub cov_floor: f64,
    /// Normals are only produced where alpha exceeds this.
    pub normal_tau: f64,
    pub sh_degree_active: usize,
}

impl Default for RasterConfig {
    fn default() -> Self {
        Self {
            tile_size: 16,
            alpha_cutoff: 1.0 / 255.0,
            transmittance_floor: 1e-4,
            cov_floor: 0.3,
            normal_tau: 0.5,
            sh_degree_active: 1,
        }
    }
}

impl RasterConfig {
    pub fn validate(&self) -> Result<()> {
        if ![8, 16, 32].contains(&self.tile_size) {
            return Err(Error::Config(format!(
                "tile_size {} not in {{8,16,32}}",
                self.tile_size
            )));
        }
        let unit = |name: &str, v: f64, allow_zero: bool| {
            let ok = if allow_zero {
                (0.0..1.0).contains(&v)
            } else {
                v > 0.0 && v < 1.0
            };
            if ok {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "{name} = {v} outside the unit interval"
                )))
            }
        };
        // Zero cutoff / floor are accepted: they turn the renderer into a smooth function.
        unit("alpha_cutoff", self.alpha_cutoff, true)?;
        unit("transmittance_floor", self.transmittance_floor, true)?;
        unit("normal_tau", self.normal_tau, true)?;
        if !(self.cov_floor > 0.0) {
            return Err(Error::Config("cov_floor must be positive".into()));
        }
        if self.sh_degree_active > crate::cloud::MAX_SH_DEGREE {
            return Err(Error::Config(format!(
                "sh_degree_active {} > 3",
                self.sh_degree_active
            )));
        }
        Ok(())
    }

    /// Settings under which the color image is a smooth function of the parameters.
    pub fn smooth() -> Self {
        Self {
            alpha_cutoff: 0.0,
            transmittance_floor: 0.0,
            ..Self::default()
        }
    }
}

/// A primitive after projection to the image plane.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectedSplat<T> {
    /// Index of the source primitive in the cloud.
    pub index: usize,
    pub mean2d: [T; 2],
    /// `(σxx, σxy, σyy)` of the floored image-space covariance.
    pub cov2d: [T; 3],
    /// `(a, b, c)`: unique entries of the inverse of `cov2d`.
    pub inv_cov2d: [T; 3],
    pub depth_cam: T,
    /// View-evaluated color, clamped to `[0, 1]`.
    pub color_eval: [T; 3],
    /// Activated opacity.
    pub opacity: T,
    /// `3 √λmax`.
    pub radius_px: T,
    /// Distance beyond which the splat's weight is below the alpha cutoff; used for binning.
    pub extent_px: T,
}

/// Pixel-aligned render stack for one camera. All arrays are row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GpBuffer<T> {
    pub width: usize,
    pub height: usize,
    /// `H × W × 3`
    pub color: Vec<T>,
    /// `H × W`
    pub alpha: Vec<T>,
    /// `H × W`, camera-space expected depth; zero where alpha is zero.
    pub depth: Vec<T>,
    /// `H × W × 3`
    pub normal: Vec<T>,
    /// `H × W × 3` blended inverse covariance `(a, b, c)`.
    pub uncertainty: Vec<T>,
}

impl<T: Scalar> GpBuffer<T> {
    pub fn zeros(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            color: vec![T::zero(); 3 * n],
            alpha: vec![T::zero(); n],
            depth: vec![T::zero(); n],
            normal: vec![T::zero(); 3 * n],
            uncertainty: vec![T::zero(); 3 * n],
        }
    }

    /// Largest absolute difference over all five modalities.
    pub fn max_abs_diff(&self, o: &Self) -> T {
        let d = |a: &[T], b: &[T]| {
            a.iter()
                .zip(b)
                .map(|(x, y)| (*x - *y).abs())
                .fold(T::zero(), T::max)
        };
        d(&self.color, &o.color)
            .max(d(&self.alpha, &o.alpha))
            .max(d(&self.depth, &o.depth))
            .max(d(&self.normal, &o.normal))
            .max(d(&self.uncertainty, &o.uncertainty))
    }
}

/// The five modalities over a trajectory, one video per modality.
#[derive(Clone, Debug, PartialEq)]
pub struct GpBufferVideo<T> {
    pub color: VideoTensor<T>,
    pub alpha: VideoTensor<T>,
    pub depth: VideoTensor<T>,
    pub normal: VideoTensor<T>,
    pub uncertainty: VideoTensor<T>,
}

/// Modality names in canonical order, matching file stems on disk.
pub const MODALITIES: [&str; 5] = ["color", "alpha", "depth", "normal", "uncert"];

impl<T: Scalar> GpBufferVideo<T> {
    pub fn modalities(&self) -> [&VideoTensor<T>; 5] {
        [
            &self.color,
            &self.alpha,
            &self.depth,
            &self.normal,
            &self.uncertainty,
        ]
    }

    pub fn from_modalities(m: [VideoTensor<T>; 5]) -> Result<Self> {
        let [color, alpha, depth, normal, uncertainty] = m;
        let [t, h, w, _] = color.dims();
        for (name, v, c) in [
            ("color", &color, 3),
            ("alpha", &alpha, 1),
            ("depth", &depth, 1),
            ("normal", &normal, 3),
            ("uncert", &uncertainty, 3),
        ] {
            if v.dims() != [t, h, w, c] {
                return Err(Error::Shape(format!(
                    "{name} has dims {:?}, expected {:?}",
                    v.dims(),
                    [t, h, w, c]
                )));
            }
        }
        Ok(Self {
            color,
            alpha,
            depth,
            normal,
            uncertainty,
        })
    }

    pub fn frames(&self) -> usize {
        self.color.frames
    }
}

/// Renders every camera and stacks the buffers per modality.
pub fn render_trajectory<T: Scalar>(
    cloud: &GaussianCloud<T>,
    cams: &[Camera<T>],
    cfg: &RasterConfig,
) -> Result<GpBufferVideo<T>> {
    let first = cams
        .first()
        .ok_or_else(|| Error::Config("render_trajectory needs at least one camera".into()))?;
    let (w, h) = (first.width, first.height);
    let mut frames: [Vec<Vec<T>>; 5] = Default::default();
    for (i, cam) in cams.iter().enumerate() {
        if cam.width != w || cam.height != h {
            return Err(Error::Shape(format!(
                "camera {i} is {}x{}, expected {w}x{h}",
                cam.width, cam.height
            )));
        }
        let buf = render_gpbuffer(cloud, cam, cfg)?;
        frames[0].push(buf.color);
        frames[1].push(buf.alpha);
        frames[2].push(buf.depth);
        frames[3].push(buf.normal);
        frames[4].push(buf.uncertainty);
    }
    let [c, a, d, n, u] = frames;
    Ok(GpBufferVideo {
        color: VideoTensor::from_frames(&c, h, w, 3)?,
        alpha: VideoTensor::from_frames(&a, h, w, 1)?,
        depth: VideoTensor::from_frames(&d, h, w, 1)?,
        normal: VideoTensor::from_frames(&n, h, w, 3)?,
        uncertainty: VideoTensor::from_frames(&u, h, w, 3)?,
    })
}

/// Renders only the color channel for each camera as `H × W × 3` images.
pub fn render_colors<T: Scalar>(
    cloud: &GaussianCloud<T>,
    cams: &[Camera<T>],
    cfg: &RasterConfig,
) -> Result<Vec<Vec<T>>> {
    cams.iter()
        .map(|cam| tile::render_color(cloud, cam, cfg))
        .collect()
}
