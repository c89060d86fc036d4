use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::cloud::GaussianCloud;
use crate::linalg::Vec3;
use crate::scalar::{logit, sigmoid, Scalar};
use crate::sh::SH_C0;

/// Draws of one synthetic feed-forward degradation.
#[derive(Clone, Debug, PartialEq)]
pub struct Degradation {
    pub opacity_scale: f64,
    pub color_shift: [f64; 3],
    pub elongated: Vec<usize>,
}

pub const OPACITY_SCALE_RANGE: (f64, f64) = (0.4, 0.8);
pub const CLUSTER_OFFSET_SIGMA: f64 = 0.02;
pub const MAX_COLOR_SHIFT: f64 = 0.05;
pub const ELONGATED_FRACTION: f64 = 0.05;
pub const ELONGATION: f64 = 4.0;

/// Synthetic stand-in for feed-forward reconstruction artifacts: semi-transparency, per-cluster
/// depth inconsistencies, a global color shift and a few spiky primitives.
pub fn corrupt_feedforward<T: Scalar>(
    cloud: &GaussianCloud<T>,
    rng: &mut impl Rng,
) -> (GaussianCloud<T>, Degradation) {
    let mut out = cloud.cast::<f64>();
    let n = out.len();
    let extent = out.extent().max(1e-6);

    let opacity_scale = rng.random_range(OPACITY_SCALE_RANGE.0..=OPACITY_SCALE_RANGE.1);
    for o in out.opacities_raw.iter_mut() {
        let a = (sigmoid(*o) * opacity_scale).clamp(1e-6, 1.0 - 1e-6);
        *o = logit(a);
    }

    // clusters: cells of a voxel grid with edge 1/4 of the extent, each shifted radially
    let cell = extent * 0.25;
    let centroid = out.centroid();
    let mut clusters: BTreeMap<[i64; 3], Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let p = out.position(i);
        let key = [0, 1, 2].map(|k| (p[k] / cell).floor() as i64);
        clusters.entry(key).or_default().push(i);
    }
    let normal = Normal::new(0.0, CLUSTER_OFFSET_SIGMA * extent).expect("positive sigma");
    for members in clusters.values() {
        let offset = normal.sample(rng);
        for &i in members {
            let p = out.position(i);
            let dir = p - centroid;
            let dir = if dir.norm() > 1e-12 {
                dir.normalized()
            } else {
                Vec3::new(0.0, 0.0, 1.0)
            };
            out.set_position(i, p + dir * offset);
        }
    }

    let color_shift: [f64; 3] =
        std::array::from_fn(|_| rng.random_range(-MAX_COLOR_SHIFT..=MAX_COLOR_SHIFT));
    for i in 0..n {
        let sh = out.sh_mut(i);
        for c in 0..3 {
            sh[c] += color_shift[c] / SH_C0;
        }
    }

    let count = ((n as f64) * ELONGATED_FRACTION).round() as usize;
    let mut elongated: Vec<usize> = rand::seq::index::sample(rng, n, count.min(n)).into_vec();
    elongated.sort_unstable();
    for &i in &elongated {
        let axis = rng.random_range(0..3);
        out.scales_raw[3 * i + axis] += ELONGATION.ln();
    }
    (
        out.cast(),
        Degradation {
            opacity_scale,
            color_shift,
            elongated,
        },
    )
}
