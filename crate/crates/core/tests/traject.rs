use proptest::prelude::*;
use splatfix_core::linalg::{Mat3, Se3};
use splatfix_core::traject::{decompose, interpolate, recompose, TrajectoryConfig};
use splatfix_core::{look_rotation, Camera, Error, Vec3};

fn cam_at(pos: Vec3<f64>, target: Vec3<f64>) -> Camera<f64> {
    let r = look_rotation(pos, target, Vec3::new(0.0, 1.0, 0.0)).unwrap();
    Camera::new(
        Camera::centered_intrinsics(30.0, 32, 24),
        Se3::new(r, -r.mul_vec(pos)),
        32,
        24,
        0.1,
        20.0,
    )
    .unwrap()
}

fn cfg(n: usize) -> TrajectoryConfig {
    TrajectoryConfig {
        samples_per_segment: n,
    }
}

fn orthonormality_error(r: &Mat3<f64>) -> f64 {
    r.matmul(&r.transpose()).max_abs_diff(&Mat3::identity())
}

#[test]
fn identity_pose_decomposition() {
    let cam = Camera::new(
        Camera::centered_intrinsics(10.0, 8, 8),
        Se3::identity(),
        8,
        8,
        0.1,
        10.0,
    )
    .unwrap();
    let d = decompose(&cam);
    assert_eq!(d.position, Vec3::new(0.0, 0.0, 0.0));
    assert_eq!(d.look_at, Vec3::new(0.0, 0.0, 1.0));
    assert_eq!(d.up, Vec3::new(0.0, -1.0, 0.0));
}

#[test]
fn translated_identity_moves_rigidly() {
    let mut cam = Camera::new(
        Camera::centered_intrinsics(10.0, 8, 8),
        Se3::identity(),
        8,
        8,
        0.1,
        10.0,
    )
    .unwrap();
    cam.pose_world_to_cam.translation = Vec3::new(-1.0, -2.0, -3.0);
    let d = decompose(&cam);
    assert_eq!(d.position, Vec3::new(1.0, 2.0, 3.0));
    assert_eq!(d.look_at, Vec3::new(1.0, 2.0, 4.0));
    assert_eq!(d.up, Vec3::new(0.0, -1.0, 0.0));
}

#[test]
fn needs_two_keys() {
    let c = cam_at(Vec3::new(0.0, 0.0, -3.0), Vec3::zeros());
    assert!(matches!(interpolate(&[c], &cfg(4)), Err(Error::Config(_))));
}

#[test]
fn identical_keys_give_constant_path() {
    let c = cam_at(Vec3::new(1.0, 0.5, -3.0), Vec3::zeros());
    let path = interpolate(&[c.clone(), c.clone()], &cfg(5)).unwrap();
    assert_eq!(path.len(), 6);
    for p in &path {
        assert!(p.same_pose(&c, 1e-12));
        assert_eq!(p.intrinsics, c.intrinsics);
    }
}

#[test]
fn translation_along_x_is_uniform() {
    let a = cam_at(Vec3::new(0.0, 0.0, -3.0), Vec3::new(0.0, 0.0, 0.0));
    let b = cam_at(Vec3::new(2.0, 0.0, -3.0), Vec3::new(2.0, 0.0, 0.0));
    let path = interpolate(&[a.clone(), b], &cfg(8)).unwrap();
    assert_eq!(path.len(), 9);
    for (k, p) in path.iter().enumerate() {
        let c = p.center();
        assert!((c.x - 2.0 * k as f64 / 8.0).abs() < 1e-6);
        assert!(
            p.pose_world_to_cam
                .rotation
                .max_abs_diff(&a.pose_world_to_cam.rotation)
                < 1e-9
        );
    }
}

#[test]
fn degenerate_up_names_the_sample() {
    let o = Vec3::zeros();
    let k = Camera::centered_intrinsics(10.0, 8, 8);
    let key = |target: Vec3<f64>, up: Vec3<f64>| {
        let r = look_rotation(o, target, up).unwrap();
        Camera::new(k, Se3::new(r, Vec3::zeros()), 8, 8, 0.1, 10.0).unwrap()
    };
    // halfway, both the blended forward and the blended up point along (0, 1, 1)
    let a = key(Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.0, 1.0, 0.0));
    let b = key(Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 1.0));
    match interpolate(&[a, b], &cfg(2)) {
        Err(Error::Trajectory { sample, .. }) => assert_eq!(sample, 1),
        other => panic!("expected a trajectory error, got {other:?}"),
    }
    let bad = splatfix_core::traject::PoseDecomposition {
        position: o,
        look_at: Vec3::new(0.0, 1.0, 0.0),
        up: Vec3::new(0.0, 1.0, 0.0),
    };
    assert!(recompose(
        &bad,
        &key(Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.0, 1.0, 0.0))
    )
    .is_err());
}

#[test]
fn four_keys_on_a_circle_stay_in_hull() {
    let keys: Vec<_> = (0..4)
        .map(|i| {
            let a = i as f64 * std::f64::consts::FRAC_PI_2 * 0.6;
            cam_at(Vec3::new(3.0 * a.cos(), 1.0, 3.0 * a.sin()), Vec3::zeros())
        })
        .collect();
    let path = interpolate(&keys, &cfg(10)).unwrap();
    assert_eq!(path.len(), 31);
    let ctrl: Vec<Vec3<f64>> = keys.iter().map(|k| k.center()).collect();
    for p in &path {
        let c = p.center();
        assert!(in_hull_2d(&ctrl, c), "{c:?} outside hull");
        assert!((c.y - 1.0).abs() < 1e-9);
    }
}

/// Point-in-convex-polygon test in the xz plane (controls are coplanar at constant y).
fn in_hull_2d(ctrl: &[Vec3<f64>], p: Vec3<f64>) -> bool {
    // brute force: p is in the hull iff it lies in some triangle of the controls
    let tri = |a: Vec3<f64>, b: Vec3<f64>, c: Vec3<f64>| {
        let s = |u: Vec3<f64>, v: Vec3<f64>, w: Vec3<f64>| {
            (v.x - u.x) * (w.z - u.z) - (v.z - u.z) * (w.x - u.x)
        };
        let (d1, d2, d3) = (s(a, b, p), s(b, c, p), s(c, a, p));
        let tol = 1e-9;
        (d1 >= -tol && d2 >= -tol && d3 >= -tol) || (d1 <= tol && d2 <= tol && d3 <= tol)
    };
    for i in 0..ctrl.len() {
        for j in i + 1..ctrl.len() {
            for k in j + 1..ctrl.len() {
                if tri(ctrl[i], ctrl[j], ctrl[k]) {
                    return true;
                }
            }
        }
    }
    false
}

#[test]
fn intrinsics_interpolate_linearly() {
    let a = cam_at(Vec3::new(0.0, 0.0, -3.0), Vec3::zeros());
    let mut b = cam_at(Vec3::new(1.0, 0.0, -3.0), Vec3::new(1.0, 0.0, 0.0));
    b.intrinsics.m[0][0] = 40.0;
    let path = interpolate(&[a, b], &cfg(4)).unwrap();
    let fx: Vec<f64> = path.iter().map(|c| c.fx()).collect();
    assert_eq!(fx, vec![30.0, 32.5, 35.0, 37.5, 40.0]);
}

fn arb_cam() -> impl Strategy<Value = Camera<f64>> {
    (
        -3.0f64..3.0,
        -1.0f64..2.0,
        -3.0f64..3.0,
        -0.5f64..0.5,
        -0.5f64..0.5,
    )
        .prop_filter_map("camera too close to target", |(x, y, z, tx, ty)| {
            let pos = Vec3::new(x, y, z);
            let target = Vec3::new(tx, ty, 0.0);
            if (pos - target).norm() < 0.5 {
                return None;
            }
            let r = look_rotation(pos, target, Vec3::new(0.0, 1.0, 0.0))?;
            Camera::new(
                Camera::centered_intrinsics(20.0, 16, 16),
                Se3::new(r, -r.mul_vec(pos)),
                16,
                16,
                0.1,
                20.0,
            )
            .ok()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decompose_recompose_round_trip(c in arb_cam()) {
        let back = recompose(&decompose(&c), &c).unwrap();
        prop_assert!(back.pose_world_to_cam.rotation.frobenius_diff(&c.pose_world_to_cam.rotation) < 1e-9);
        prop_assert!(back.pose_world_to_cam.translation.max_abs_diff(c.pose_world_to_cam.translation) < 1e-9);
    }

    #[test]
    fn endpoints_and_orthonormality(keys in proptest::collection::vec(arb_cam(), 2..7), n in 1usize..6) {
        if let Ok(path) = interpolate(&keys, &cfg(n)) {
            prop_assert_eq!(path.len(), (keys.len() - 1) * n + 1);
            prop_assert!(path[0].same_pose(&keys[0], 1e-9));
            prop_assert!(path.last().unwrap().same_pose(keys.last().unwrap(), 1e-9));
            for p in &path {
                prop_assert!(orthonormality_error(&p.pose_world_to_cam.rotation) < 1e-9);
                prop_assert!(p.validate().is_ok());
            }
        }
    }

    #[test]
    fn doubling_density_nests_samples(keys in proptest::collection::vec(arb_cam(), 2..6), n in 1usize..5) {
        if let (Ok(a), Ok(b)) = (interpolate(&keys, &cfg(n)), interpolate(&keys, &cfg(2 * n))) {
            for (k, cam) in a.iter().enumerate() {
                prop_assert!(cam.same_pose(&b[2 * k], 1e-9));
            }
        }
    }
}
