use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::cloud::GaussianCloud;
use crate::linalg::Vec3;
use crate::rng::{stream_rng, streams};
use crate::scalar::{logit, Scalar};
use crate::sh::rgb_to_dc;

/// Size and optional overrides for procedural scenes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    /// Splat count; drawn from 100..=500 when absent.
    pub splats: Option<usize>,
    /// Capture frame count; drawn from 40..=120 when absent.
    pub frames: Option<usize>,
    pub sh_degree: usize,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width: 32,
            height: 32,
            splats: None,
            frames: None,
            sh_degree: 1,
        }
    }
}

pub const SCENE_NEAR: f64 = 0.1;
pub const SCENE_FAR: f64 = 10.0;

/// Room-like ground-truth scene (a textured floor plus 2 to 4 object clusters, y up) and an
/// orbiting capture path. Every camera sees at least half of the splat means.
pub fn make_scene<T: Scalar>(seed: u64, spec: &SceneSpec) -> (GaussianCloud<T>, Vec<Camera<T>>) {
    let mut rng = stream_rng(seed, streams::SCENE);
    let n = spec.splats.unwrap_or_else(|| rng.random_range(100..=500));
    let frames = spec.frames.unwrap_or_else(|| rng.random_range(40..=120));
    let n_objects = rng.random_range(2..=4);
    let n_floor = (n * 2 / 5).max(1).min(n);
    let mut cloud = GaussianCloud::<f64>::zeros(n, spec.sh_degree);
    let nb = cloud.num_basis();

    // floor: jittered grid of flat splats with a two-tone checker texture
    let tones = [
        [
            rng.random_range(0.55..0.8),
            rng.random_range(0.45..0.7),
            rng.random_range(0.3..0.5),
        ],
        [
            rng.random_range(0.2..0.35),
            rng.random_range(0.2..0.35),
            rng.random_range(0.25..0.4),
        ],
    ];
    let half = 2.0;
    let side = (n_floor as f64).sqrt().ceil() as usize;
    let cell = 2.0 * half / side as f64;
    for i in 0..n_floor {
        let (gx, gz) = (i % side, i / side);
        let x = -half + (gx as f64 + rng.random_range(0.25..0.75)) * cell;
        let z = -half + (gz as f64 + rng.random_range(0.25..0.75)) * cell;
        cloud.positions[3 * i..3 * i + 3].copy_from_slice(&[x, 0.0, z]);
        let s = cell * 0.6;
        cloud.scales_raw[3 * i..3 * i + 3].copy_from_slice(&[s.ln(), (s * 0.08).ln(), s.ln()]);
        cloud.opacities_raw[i] = logit(0.9);
        let tone = tones[(((x + half) / 0.5).floor() as i64 + ((z + half) / 0.5).floor() as i64)
            .rem_euclid(2) as usize];
        set_color(&mut cloud, i, tone, &mut rng, 0.05);
    }

    // objects: splats scattered over sphere surfaces
    let centers: Vec<(Vec3<f64>, f64, [f64; 3])> = (0..n_objects)
        .map(|_| {
            let r = rng.random_range(0.25..0.45);
            let c = Vec3::new(
                rng.random_range(-1.1..1.1),
                r + rng.random_range(0.0..0.4),
                rng.random_range(-1.1..1.1),
            );
            let color = [
                rng.random_range(0.1..0.95),
                rng.random_range(0.1..0.95),
                rng.random_range(0.1..0.95),
            ];
            (c, r, color)
        })
        .collect();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    for i in n_floor..n {
        let (c, r, color) = centers[(i - n_floor) % n_objects];
        let mut d = Vec3::new(
            normal.sample(&mut rng),
            normal.sample(&mut rng),
            normal.sample(&mut rng),
        );
        if d.norm() < 1e-9 {
            d = Vec3::new(0.0, 1.0, 0.0);
        }
        let p = c + d.normalized() * (r * rng.random_range(0.85..1.0));
        cloud.set_position(i, p);
        for k in 0..3 {
            cloud.scales_raw[3 * i + k] = rng.random_range(0.05f64..0.12).ln();
        }
        let q: [f64; 4] = std::array::from_fn(|_| normal.sample(&mut rng));
        cloud.rotations[4 * i..4 * i + 4].copy_from_slice(&q);
        cloud.opacities_raw[i] = logit(rng.random_range(0.8..0.97));
        set_color(&mut cloud, i, color, &mut rng, 0.08);
        // mild view dependence
        for v in cloud.sh_coeffs[i * nb * 3 + 3..(i + 1) * nb * 3].iter_mut() {
            *v = rng.random_range(-0.05..0.05);
        }
    }
    cloud.normalize_rotations();

    let target = Vec3::new(0.0, 0.35, 0.0);
    let mut radius = rng.random_range(3.2..4.0);
    let height = rng.random_range(1.2..2.2);
    let start = rng.random_range(0.0..std::f64::consts::TAU);
    let sweep = rng.random_range(100f64..200.0).to_radians();
    let focal = 0.9 * spec.width as f64;
    let k = Camera::centered_intrinsics(focal, spec.width, spec.height);
    let cams = loop {
        let cams: Vec<Camera<f64>> = (0..frames)
            .map(|f| {
                let a = start + sweep * f as f64 / (frames - 1).max(1) as f64;
                let pos = Vec3::new(radius * a.cos(), height, radius * a.sin());
                Camera::look_at(
                    pos,
                    target,
                    Vec3::new(0.0, 1.0, 0.0),
                    k,
                    spec.width,
                    spec.height,
                    SCENE_NEAR,
                    SCENE_FAR,
                )
                .expect("orbit cameras are valid")
            })
            .collect();
        let ok = cams.iter().all(|c| {
            let seen = (0..n).filter(|&i| c.sees(cloud.position(i))).count();
            2 * seen >= n
        });
        if ok || radius > 9.0 {
            break cams;
        }
        radius *= 1.1;
    };
    (cloud.cast(), cams.iter().map(|c| c.cast()).collect())
}

fn set_color(
    cloud: &mut GaussianCloud<f64>,
    i: usize,
    base: [f64; 3],
    rng: &mut impl Rng,
    jitter: f64,
) {
    let sh = cloud.sh_mut(i);
    for c in 0..3 {
        let v = (base[c] + rng.random_range(-jitter..jitter)).clamp(0.02, 0.98);
        sh[c] = rgb_to_dc(v);
    }
}
