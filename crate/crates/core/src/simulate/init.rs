use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cloud::GaussianCloud;
use crate::error::{Error, Result};
use crate::linalg::Vec3;
use crate::scalar::{logit, Scalar};
use crate::sh::rgb_to_dc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Ground-truth means with noise at 1% of the scene extent.
    PointsFromScene,
    /// Uniform in the bounding box of the scene.
    RandomPoints,
    /// Ground-truth means with noise at 5% of the scene extent.
    NoisyDensePoints,
}

impl InitMode {
    pub const ALL: [InitMode; 3] = [
        InitMode::PointsFromScene,
        InitMode::RandomPoints,
        InitMode::NoisyDensePoints,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InitMode::PointsFromScene => "points_from_scene",
            InitMode::RandomPoints => "random_points",
            InitMode::NoisyDensePoints => "noisy_dense_points",
        }
    }
}

pub const INIT_OPACITY: f64 = 0.1;

/// Starting cloud for a fit, built from a ground-truth scene the way a point-cloud
/// initializer would see it: point positions and colors only, isotropic scales from the
/// mean distance to the three nearest neighbors, identity rotations, low opacity.
pub fn init_cloud<T: Scalar>(
    gt: &GaussianCloud<T>,
    mode: InitMode,
    rng: &mut impl Rng,
) -> GaussianCloud<T> {
    let n = gt.len();
    let extent = gt.extent().as_f64().max(1e-6);
    let mut out = GaussianCloud::<f64>::zeros(n, gt.sh_degree);
    let (lo, hi) = gt.bounds();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    for i in 0..n {
        let p = gt.position(i).cast::<f64>();
        let q = match mode {
            InitMode::PointsFromScene | InitMode::NoisyDensePoints => {
                let sigma = if mode == InitMode::PointsFromScene {
                    0.01
                } else {
                    0.05
                } * extent;
                p + Vec3::new(normal.sample(rng), normal.sample(rng), normal.sample(rng)) * sigma
            }
            InitMode::RandomPoints => {
                let mut v = Vec3::zeros();
                for k in 0..3 {
                    let (a, b) = (lo[k].as_f64(), hi[k].as_f64());
                    v[k] = if b > a { rng.random_range(a..b) } else { a };
                }
                v
            }
        };
        out.set_position(i, q);
        let sh = out.sh_mut(i);
        match mode {
            InitMode::RandomPoints => {
                for c in sh.iter_mut().take(3) {
                    *c = rgb_to_dc(rng.random_range(0.0..1.0));
                }
            }
            _ => {
                for c in 0..3 {
                    sh[c] = gt.sh(i)[c].as_f64();
                }
            }
        }
        out.opacities_raw[i] = logit(INIT_OPACITY);
    }
    let scales = knn_scales(&out, 3);
    for (i, s) in scales.iter().enumerate() {
        out.scales_raw[3 * i..3 * i + 3].copy_from_slice(&[s.ln(); 3]);
    }
    out.cast()
}

/// Mean distance to the `k` nearest neighbors, floored to keep log-scales finite.
fn knn_scales(cloud: &GaussianCloud<f64>, k: usize) -> Vec<f64> {
    let n = cloud.len();
    let floor = (cloud.extent() * 1e-3).max(1e-4);
    (0..n)
        .map(|i| {
            let p = cloud.position(i);
            let mut d: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (cloud.position(j) - p).norm())
                .collect();
            if d.is_empty() {
                return floor.max(0.01);
            }
            let kk = k.min(d.len());
            d.select_nth_unstable_by(kk - 1, |a, b| a.total_cmp(b));
            let m = d[..kk].iter().sum::<f64>() / kk as f64;
            m.max(floor)
        })
        .collect()
}

/// Number of frames kept by [`sparse_subset`].
pub fn retained_count(n: usize, fraction: f64) -> usize {
    // tolerance guards products like 0.05 * 100 landing just above an integer
    let c = (fraction * n as f64 - 1e-9).ceil().max(0.0) as usize;
    c.max(2).min(n)
}

/// Sorted indices of `max(2, ceil(fraction · n))` frames, sampled without replacement and
/// always including the first and last frame.
pub fn sparse_subset(n: usize, fraction: f64, rng: &mut impl Rng) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(Error::Config(format!(
            "sparse subset needs at least 2 frames, got {n}"
        )));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!(
            "retained fraction {fraction} outside (0, 1]"
        )));
    }
    let keep = retained_count(n, fraction);
    let mut idx: Vec<usize> = sample(rng, n - 2, keep - 2)
        .into_iter()
        .map(|i| i + 1)
        .collect();
    idx.push(0);
    idx.push(n - 1);
    idx.sort_unstable();
    Ok(idx)
}
