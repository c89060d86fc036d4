use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splatfix_core::linalg::Se3;
use splatfix_core::raster::{
    compute_normals, project_splat, render_gpbuffer, render_reference, render_trajectory,
    RasterConfig, MAX_GAMMA,
};
use splatfix_core::scalar::logit;
use splatfix_core::sh::rgb_to_dc;
use splatfix_core::{Camera, GaussianCloud, Vec3};

fn camera(w: usize, h: usize, f: f64) -> Camera<f64> {
    Camera::new(
        Camera::centered_intrinsics(f, w, h),
        Se3::identity(),
        w,
        h,
        0.1,
        100.0,
    )
    .unwrap()
}

fn random_scene(rng: &mut ChaCha8Rng, n: usize) -> GaussianCloud<f64> {
    let mut c = GaussianCloud::zeros(n, 1);
    for i in 0..n {
        c.positions[3 * i] = rng.random_range(-1.5..1.5);
        c.positions[3 * i + 1] = rng.random_range(-1.5..1.5);
        c.positions[3 * i + 2] = rng.random_range(2.0..6.0);
        c.opacities_raw[i] = rng.random_range(-3.0..4.0);
        for k in 0..3 {
            c.scales_raw[3 * i + k] = rng.random_range(0.02f64..0.3).ln();
        }
        for k in 0..4 {
            c.rotations[4 * i + k] = rng.random_range(-1.0..1.0);
        }
        for v in c.sh_mut(i) {
            *v = rng.random_range(-0.8..0.8);
        }
    }
    c
}

fn single(pos: [f64; 3], scale: f64, opacity: f64, rgb: [f64; 3]) -> GaussianCloud<f64> {
    let mut c = GaussianCloud::zeros(1, 0);
    c.positions = pos.to_vec();
    c.scales_raw = vec![scale.ln(); 3];
    c.opacities_raw = vec![if opacity >= 1.0 { 40.0 } else { logit(opacity) }];
    c.sh_coeffs = rgb.iter().map(|&v| rgb_to_dc(v)).collect();
    c
}

fn concat(a: &GaussianCloud<f64>, b: &GaussianCloud<f64>) -> GaussianCloud<f64> {
    let mut c = a.clone();
    c.positions.extend(&b.positions);
    c.opacities_raw.extend(&b.opacities_raw);
    c.sh_coeffs.extend(&b.sh_coeffs);
    c.scales_raw.extend(&b.scales_raw);
    c.rotations.extend(&b.rotations);
    c
}

#[test]
fn empty_cloud_renders_zeros() {
    let cam = camera(20, 12, 20.0);
    let buf = render_gpbuffer(
        &GaussianCloud::<f64>::zeros(0, 1),
        &cam,
        &RasterConfig::default(),
    )
    .unwrap();
    for v in [
        &buf.color,
        &buf.alpha,
        &buf.depth,
        &buf.normal,
        &buf.uncertainty,
    ] {
        assert!(v.iter().all(|&x| x == 0.0));
    }
    let r = render_reference(
        &GaussianCloud::<f64>::zeros(0, 1),
        &cam,
        &RasterConfig::default(),
    )
    .unwrap();
    assert_eq!(r, buf);
}

#[test]
fn opaque_splat_at_its_center() {
    let cam = camera(17, 17, 20.0);
    let cloud = single([0.0, 0.0, 2.5], 0.2, 1.0, [0.2, 0.6, 0.9]);
    let buf = render_gpbuffer(&cloud, &cam, &RasterConfig::default()).unwrap();
    let p = 8 * 17 + 8;
    for (c, want) in buf.color[3 * p..3 * p + 3].iter().zip([0.2, 0.6, 0.9]) {
        assert!((c - want * MAX_GAMMA).abs() < 1e-12);
    }
    assert!(buf.alpha[p] < 1.0 && buf.alpha[p] > 1.0 - 1e-6);
    assert!((buf.depth[p] - 2.5).abs() < 1e-12);
    let s = project_splat(&cloud, 0, &cam, &RasterConfig::default()).unwrap();
    for k in 0..3 {
        assert!((buf.uncertainty[3 * p + k] - s.inv_cov2d[k]).abs() < 1e-6);
    }
}

#[test]
fn two_half_opaque_splats() {
    let cam = camera(17, 17, 20.0);
    let front = single([0.0, 0.0, 2.0], 0.2, 0.5, [1.0, 0.0, 0.2]);
    let back = single([0.0, 0.0, 3.0], 0.2, 0.5, [0.0, 1.0, 0.6]);
    // input order must not matter
    for cloud in [concat(&front, &back), concat(&back, &front)] {
        let buf = render_gpbuffer(&cloud, &cam, &RasterConfig::default()).unwrap();
        let p = 8 * 17 + 8;
        let want = [0.5, 0.25, 0.5 * 0.2 + 0.25 * 0.6];
        for k in 0..3 {
            assert!((buf.color[3 * p + k] - want[k]).abs() < 1e-12);
        }
        assert!((buf.alpha[p] - 0.75).abs() < 1e-12);
    }
}

#[test]
fn tiled_matches_reference_on_random_scenes() {
    let floorless = RasterConfig {
        transmittance_floor: 0.0,
        ..RasterConfig::default()
    };
    let cam = camera(64, 64, 60.0);
    let mut worst = 0.0f64;
    for cfg in [RasterConfig::default(), floorless] {
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(1..=200);
            let cloud = random_scene(&mut rng, n);
            let a = render_gpbuffer(&cloud, &cam, &cfg).unwrap();
            let b = render_reference(&cloud, &cam, &cfg).unwrap();
            worst = worst.max(a.max_abs_diff(&b));
        }
    }
    assert!(worst < 1e-5, "max diff {worst}");
}

#[test]
fn tile_size_does_not_change_output() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cloud = random_scene(&mut rng, 80);
    let cam = camera(50, 40, 45.0);
    let base = render_gpbuffer(&cloud, &cam, &RasterConfig::default()).unwrap();
    for ts in [8, 32] {
        let cfg = RasterConfig {
            tile_size: ts,
            ..RasterConfig::default()
        };
        assert_eq!(render_gpbuffer(&cloud, &cam, &cfg).unwrap(), base);
    }
}

#[test]
fn output_is_independent_of_thread_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cloud = random_scene(&mut rng, 120);
    let cam = camera(64, 48, 50.0);
    let cfg = RasterConfig::default();
    let one = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let four = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap();
    let a = one.install(|| render_gpbuffer(&cloud, &cam, &cfg).unwrap());
    let b = four.install(|| render_gpbuffer(&cloud, &cam, &cfg).unwrap());
    assert_eq!(a, b);
}

#[test]
fn projection_examples() {
    let cam = camera(33, 33, 16.0);
    let cfg = RasterConfig::default();
    let cloud = single([0.0, 0.0, 1.0], 0.25, 0.9, [0.5; 3]);
    let s = project_splat(&cloud, 0, &cam, &cfg).unwrap();
    assert_eq!(s.mean2d, [16.0, 16.0]);
    assert!((s.cov2d[0] - (16.0f64 * 0.25).powi(2) - 0.3).abs() < 1e-12);
    // doubling depth quarters the unfloored covariance
    let far = single([0.0, 0.0, 2.0], 0.25, 0.9, [0.5; 3]);
    let s2 = project_splat(&far, 0, &cam, &cfg).unwrap();
    assert!(((s2.cov2d[0] - 0.3) * 4.0 - (s.cov2d[0] - 0.3)).abs() < 1e-12);
    let behind = single([0.0, 0.0, -0.1], 0.25, 0.9, [0.5; 3]);
    assert!(project_splat(&behind, 0, &cam, &cfg).is_none());
}

#[test]
fn single_splat_depth_is_constant() {
    let cam = camera(24, 24, 20.0);
    let mut cloud = single([0.1, -0.2, 3.0], 0.3, 0.8, [0.5; 3]);
    cloud.scales_raw = vec![0.4f64.ln(), 0.1f64.ln(), 0.2f64.ln()];
    cloud.rotations = vec![0.9, 0.1, 0.3, -0.2];
    let buf = render_gpbuffer(&cloud, &cam, &RasterConfig::default()).unwrap();
    let mut seen = 0;
    for (a, d) in buf.alpha.iter().zip(&buf.depth) {
        if *a > 0.0 {
            seen += 1;
            assert!((d - 3.0).abs() < 1e-12);
        } else {
            assert_eq!(*d, 0.0);
        }
    }
    assert!(seen > 10);
}

fn plane_depth(cam: &Camera<f64>, depth_at: impl Fn(Vec3<f64>) -> f64) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (cam.width, cam.height);
    let mut depth = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            depth[y * w + x] = depth_at(cam.unproject_unit_depth(x as f64, y as f64));
        }
    }
    (depth, vec![1.0; w * h])
}

#[test]
fn fronto_parallel_plane_normals() {
    let cam = camera(16, 12, 14.0);
    let (depth, alpha) = plane_depth(&cam, |_| 2.0);
    let n = compute_normals(&depth, &alpha, &cam, &RasterConfig::default());
    for p in 0..16 * 12 {
        assert!((n[3 * p] - 0.0).abs() < 1e-12);
        assert!((n[3 * p + 1] - 0.0).abs() < 1e-12);
        assert!((n[3 * p + 2] + 1.0).abs() < 1e-12);
    }
}

#[test]
fn tilted_plane_normals() {
    let cam = camera(16, 16, 30.0);
    // plane z - y = 2: tilted 45° about the image x-axis
    let (depth, alpha) = plane_depth(&cam, |r| 2.0 / (1.0 - r.y));
    let n = compute_normals(&depth, &alpha, &cam, &RasterConfig::default());
    let s = 0.5f64.sqrt();
    for y in 1..15 {
        for x in 1..15 {
            let p = y * 16 + x;
            assert!(n[3 * p].abs() < 1e-9);
            assert!(
                (n[3 * p + 1] - s).abs() < 1e-9,
                "{:?}",
                &n[3 * p..3 * p + 3]
            );
            assert!((n[3 * p + 2] + s).abs() < 1e-9);
        }
    }
}

#[test]
fn transparent_pixels_have_no_normals() {
    let cam = camera(10, 10, 10.0);
    let (depth, _) = plane_depth(&cam, |_| 2.0);
    let n = compute_normals(&depth, &vec![0.0; 100], &cam, &RasterConfig::default());
    assert!(n.iter().all(|&v| v == 0.0));
    // a single low-alpha pixel invalidates itself and the neighbors that read it
    let mut alpha = vec![1.0; 100];
    alpha[5 * 10 + 5] = 0.4;
    let n = compute_normals(&depth, &alpha, &cam, &RasterConfig::default());
    for p in [55, 54, 56, 45, 65] {
        assert!(n[3 * p..3 * p + 3].iter().all(|&v| v == 0.0));
    }
    assert!((n[3 * 22 + 2] + 1.0).abs() < 1e-12);
}

#[test]
fn rendered_normals_are_unit_or_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cloud = random_scene(&mut rng, 150);
    let cam = camera(40, 40, 40.0);
    let cfg = RasterConfig::default();
    let buf = render_gpbuffer(&cloud, &cam, &cfg).unwrap();
    for p in 0..40 * 40 {
        let n = Vec3::from_slice(&buf.normal[3 * p..3 * p + 3]);
        let len = n.norm();
        assert!(len == 0.0 || (len - 1.0).abs() < 1e-5);
        if buf.alpha[p] <= cfg.normal_tau {
            assert_eq!(len, 0.0);
        }
    }
}

#[test]
fn trajectory_stacks_frames() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cloud = random_scene(&mut rng, 30);
    let cam = camera(8, 6, 8.0);
    let cfg = RasterConfig::default();
    let single = render_gpbuffer(&cloud, &cam, &cfg).unwrap();
    let video = render_trajectory(&cloud, std::slice::from_ref(&cam), &cfg).unwrap();
    assert_eq!(video.color.data, single.color);
    assert_eq!(video.uncertainty.data, single.uncertainty);
    let long = render_trajectory(&cloud, &vec![cam; 81], &cfg).unwrap();
    assert_eq!(long.frames(), 81);
    assert_eq!(long.depth.dims(), [81, 6, 8, 1]);
    assert_eq!(long.color.frame(0), long.color.frame(80));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn alpha_grows_with_opacity(o1 in 0.01f64..0.98, bump in 0.001f64..0.5, x in -0.5f64..0.5, s in 0.05f64..0.5) {
        let cam = camera(16, 16, 16.0);
        let o2 = (o1 + bump).min(0.999);
        let a = render_gpbuffer(&single([x, 0.1, 2.0], s, o1, [0.5; 3]), &cam, &RasterConfig::default()).unwrap();
        let b = render_gpbuffer(&single([x, 0.1, 2.0], s, o2, [0.5; 3]), &cam, &RasterConfig::default()).unwrap();
        for (lo, hi) in a.alpha.iter().zip(&b.alpha) {
            prop_assert!(hi >= lo);
        }
    }

    #[test]
    fn permutation_leaves_output_unchanged(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..40);
        let cloud = random_scene(&mut rng, n);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.reverse();
        perm.rotate_left(rng.random_range(0..n));
        let shuffled = cloud.select(&perm);
        let cam = camera(24, 24, 24.0);
        let cfg = RasterConfig::default();
        prop_assert_eq!(render_gpbuffer(&cloud, &cam, &cfg).unwrap(), render_gpbuffer(&shuffled, &cam, &cfg).unwrap());
    }
}
