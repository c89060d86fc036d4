//! Held-out evaluation.

use serde::{Deserialize, Serialize};
use splatfix_core::io::inf_f64;
use splatfix_core::metrics::{psnr, ssim, SsimWindow};
use splatfix_core::optim::View;
use splatfix_core::raster::render_colors;
use splatfix_core::{GaussianCloud, RasterConfig, Scalar};

use crate::error::{Error, Result, Stage, StageExt};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewScore {
    #[serde(with = "inf_f64")]
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub views: Vec<ViewScore>,
    #[serde(with = "inf_f64")]
    pub mean_psnr: f64,
    #[serde(with = "inf_f64")]
    pub median_psnr: f64,
    pub mean_ssim: f64,
    pub median_ssim: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        let (a, b) = (v[n / 2 - 1], v[n / 2]);
        if a == b {
            a
        } else {
            0.5 * (a + b)
        }
    }
}

impl EvalReport {
    pub fn from_scores(views: Vec<ViewScore>) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::Config("evaluation needs at least one view".into()));
        }
        let n = views.len() as f64;
        let ps: Vec<f64> = views.iter().map(|v| v.psnr).collect();
        let ss: Vec<f64> = views.iter().map(|v| v.ssim).collect();
        Ok(Self {
            mean_psnr: ps.iter().sum::<f64>() / n,
            median_psnr: median(ps),
            mean_ssim: ss.iter().sum::<f64>() / n,
            median_ssim: median(ss),
            views,
        })
    }
}

/// Renders each held-out camera (color only) and scores it against the view's image.
pub fn evaluate<T: Scalar>(
    cloud: &GaussianCloud<T>,
    held_out: &[View<T>],
    raster: &RasterConfig,
) -> Result<EvalReport> {
    if held_out.is_empty() {
        return Err(Error::Config("evaluation needs at least one view".into()));
    }
    let cams: Vec<_> = held_out.iter().map(|v| v.camera.clone()).collect();
    let images = render_colors(cloud, &cams, raster).stage(Stage::Render)?;
    let scores = held_out
        .iter()
        .zip(&images)
        .map(|(v, img)| {
            let (h, w) = (v.camera.height, v.camera.width);
            Ok(ViewScore {
                psnr: psnr(img, &v.image).stage(Stage::Evaluate)?.as_f64(),
                ssim: ssim(img, &v.image, h, w, 3, SsimWindow::default())
                    .stage(Stage::Evaluate)?
                    .as_f64(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_scores(scores)
}
