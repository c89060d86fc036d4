//! Differentiable color rendering, the photometric loss and the scene fitting loop.

mod adam;
mod backward;
mod loss;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::cloud::GaussianCloud;
use crate::error::{Error, Result};
use crate::metrics::SsimWindow;
use crate::raster::{render_colors, RasterConfig};
use crate::scalar::Scalar;

pub use adam::Adam;
pub use backward::{render_color_with_grad, GradBuffer};
pub use loss::{loss_l1_dssim, LossOutput};

/// A camera with its observed `H × W × 3` image.
#[derive(Clone, Debug, PartialEq)]
pub struct View<T> {
    pub camera: Camera<T>,
    pub image: Vec<T>,
}

impl<T: Scalar> View<T> {
    pub fn new(camera: Camera<T>, image: Vec<T>) -> Result<Self> {
        if image.len() != 3 * camera.width * camera.height {
            return Err(Error::Shape(format!(
                "image has {} values, camera is {}x{}",
                image.len(),
                camera.width,
                camera.height
            )));
        }
        Ok(Self { camera, image })
    }
}

/// Renders ground-truth views of `cloud` from each camera.
pub fn render_views<T: Scalar>(
    cloud: &GaussianCloud<T>,
    cams: &[Camera<T>],
    cfg: &RasterConfig,
) -> Result<Vec<View<T>>> {
    let images = render_colors(cloud, cams, cfg)?;
    Ok(cams
        .iter()
        .cloned()
        .zip(images)
        .map(|(camera, image)| View { camera, image })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearningRates {
    /// Multiplied by the scene extent.
    pub positions: f64,
    /// Position rate at the last step relative to the first; decays exponentially.
    pub positions_final_ratio: f64,
    pub opacities: f64,
    pub sh_dc: f64,
    pub sh_rest: f64,
    pub scales: f64,
    pub rotations: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            positions: 1.6e-4,
            positions_final_ratio: 0.01,
            opacities: 0.05,
            sh_dc: 2.5e-3,
            sh_rest: 2.5e-3 / 20.0,
            scales: 5e-3,
            rotations: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub iterations: usize,
    pub lambda_dssim: f64,
    pub learning_rates: LearningRates,
    pub adam_betas: [f64; 2],
    pub adam_eps: f64,
    pub ssim_window: usize,
    pub ssim_sigma: f64,
    pub seed: u64,
    /// Scales the position learning rate; derived from the cameras when absent.
    pub scene_extent: Option<f64>,
    pub raster: RasterConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            lambda_dssim: 0.2,
            learning_rates: LearningRates::default(),
            adam_betas: [0.9, 0.999],
            adam_eps: 1e-15,
            ssim_window: 11,
            ssim_sigma: 1.5,
            seed: 0,
            scene_extent: None,
            raster: RasterConfig::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda_dssim) {
            return Err(Error::Config(format!(
                "lambda_dssim {} outside [0, 1]",
                self.lambda_dssim
            )));
        }
        self.window().validate()?;
        self.raster.validate()
    }

    pub fn window(&self) -> SsimWindow {
        SsimWindow {
            size: self.ssim_window,
            sigma: self.ssim_sigma,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub loss: f64,
    pub l1: f64,
    pub dssim: f64,
}

#[derive(Clone, Debug)]
pub struct FitOutcome<T> {
    pub cloud: GaussianCloud<T>,
    pub log: Vec<LossRecord>,
}

/// Radius of the camera centers around their mean, padded by 10%; falls back to the cloud
/// extent for a single camera.
pub fn camera_extent<T: Scalar>(views: &[View<T>], cloud: &GaussianCloud<T>) -> f64 {
    let centers: Vec<_> = views.iter().map(|v| v.camera.center()).collect();
    let mut mean = crate::linalg::Vec3::zeros();
    for c in &centers {
        mean += *c;
    }
    mean = mean * (T::one() / T::from_usize(centers.len().max(1)));
    let r = centers
        .iter()
        .map(|c| (*c - mean).norm().as_f64())
        .fold(0.0, f64::max);
    let r = if r > 1e-9 {
        r * 1.1
    } else {
        cloud.extent().as_f64()
    };
    r.max(1e-6)
}

/// Fits `cloud0` to the views with Adam, one randomly drawn view per step.
pub fn fit<T: Scalar>(
    cloud0: &GaussianCloud<T>,
    views: &[View<T>],
    cfg: &FitConfig,
) -> Result<FitOutcome<T>> {
    cfg.validate()?;
    if views.is_empty() {
        return Err(Error::Config("fit needs at least one view".into()));
    }
    if cloud0.is_empty() {
        return Err(Error::Config("fit needs a nonempty cloud".into()));
    }
    cloud0.validate()?;
    let mut cloud = cloud0.clone();
    let extent = cfg
        .scene_extent
        .unwrap_or_else(|| camera_extent(views, &cloud));
    let lr = &cfg.learning_rates;
    let [b1, b2] = cfg.adam_betas.map(T::lit);
    let eps = T::lit(cfg.adam_eps);
    let mut opt: Vec<Adam<T>> = cloud
        .groups()
        .iter()
        .map(|(_, g)| Adam::new(g.len(), b1, b2, eps))
        .collect();
    let nb3 = cloud.num_basis() * 3;
    let sh_rates: Vec<T> = (0..cloud.sh_coeffs.len())
        .map(|k| T::lit(if k % nb3 < 3 { lr.sh_dc } else { lr.sh_rest }))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = Vec::new();
    let lambda = T::lit(cfg.lambda_dssim);
    let win = cfg.window();
    let mut log = Vec::with_capacity(cfg.iterations);
    for step in 0..cfg.iterations {
        if order.is_empty() {
            order = (0..views.len()).collect();
            order.shuffle(&mut rng);
            order.reverse();
        }
        let view = &views[order.pop().expect("refilled above")];
        let cam = &view.camera;
        let pred =
            crate::raster::render_colors(&cloud, std::slice::from_ref(cam), &cfg.raster)?.remove(0);
        let out = loss_l1_dssim(&pred, &view.image, cam.height, cam.width, lambda, win)?;
        let (_, grads) = render_color_with_grad(&cloud, cam, &cfg.raster, &out.grad)?;
        if !out.loss.is_finite() || grads.non_finite_group().is_some() {
            return Err(Error::NonFinite {
                step,
                group: grads.non_finite_group().unwrap_or("loss").to_string(),
            });
        }
        log.push(LossRecord {
            step,
            loss: out.loss.as_f64(),
            l1: out.l1.as_f64(),
            dssim: out.dssim.as_f64(),
        });
        let t = if cfg.iterations > 1 {
            step as f64 / (cfg.iterations - 1) as f64
        } else {
            0.0
        };
        let pos_lr = T::lit(lr.positions * extent * lr.positions_final_ratio.powf(t));
        let grad_groups = grads.groups();
        for (k, ((name, params), opt)) in cloud
            .groups_mut()
            .into_iter()
            .zip(opt.iter_mut())
            .enumerate()
        {
            let g = grad_groups[k].1;
            match name {
                "sh" => opt.update_per_element(params, g, &sh_rates),
                _ => {
                    let rate = match name {
                        "positions" => pos_lr,
                        "opacities" => T::lit(lr.opacities),
                        "scales" => T::lit(lr.scales),
                        _ => T::lit(lr.rotations),
                    };
                    opt.update(params, g, rate);
                }
            }
            if params.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    step,
                    group: name.to_string(),
                });
            }
        }
        cloud.normalize_rotations();
    }
    Ok(FitOutcome { cloud, log })
}

/// Originals followed by refined views whose pose does not duplicate any original.
pub fn merge_views<T: Scalar>(original: &[View<T>], refined: &[View<T>]) -> Vec<View<T>> {
    let tol = T::lit(1e-9);
    let mut out = original.to_vec();
    for r in refined {
        if !original.iter().any(|o| o.camera.same_pose(&r.camera, tol)) {
            out.push(r.clone());
        }
    }
    out
}
