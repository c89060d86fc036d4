//! Smooth camera paths through key poses.
//!
//! Each key is decomposed into position, look-at point and up vector; every component is
//! interpolated by a clamped uniform B-spline and the rotation is rebuilt per sample.

use serde::{Deserialize, Serialize};

use crate::camera::{look_rotation, Camera};
use crate::error::{Error, Result};
use crate::linalg::{Mat3, Se3, Vec3};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseDecomposition<T> {
    pub position: Vec3<T>,
    pub look_at: Vec3<T>,
    pub up: Vec3<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectoryConfig {
    pub samples_per_segment: usize,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            samples_per_segment: 8,
        }
    }
}

pub const SPLINE_DEGREE: usize = 3;

pub fn decompose<T: Scalar>(cam: &Camera<T>) -> PoseDecomposition<T> {
    let rt = cam.pose_world_to_cam.rotation.transpose();
    let position = cam.center();
    let forward = rt.mul_vec(Vec3::new(T::zero(), T::zero(), T::one()));
    let up = rt.mul_vec(Vec3::new(T::zero(), -T::one(), T::zero()));
    PoseDecomposition {
        position,
        look_at: position + forward,
        up,
    }
}

/// Camera at `pose` with the intrinsics, size and clip planes of `like`.
pub fn recompose<T: Scalar>(pose: &PoseDecomposition<T>, like: &Camera<T>) -> Result<Camera<T>> {
    let r = look_rotation(pose.position, pose.look_at, pose.up)
        .ok_or_else(|| Error::Camera("up vector parallel to the viewing direction".into()))?;
    let t = -r.mul_vec(pose.position);
    Camera::new(
        like.intrinsics,
        Se3::new(r, t),
        like.width,
        like.height,
        like.near,
        like.far,
    )
}

/// Clamped uniform knot vector for `n` control points of degree `p`.
fn clamped_knots(n: usize, p: usize) -> Vec<f64> {
    let interior = n - p - 1;
    let mut knots = vec![0.0; p + 1];
    for i in 1..=interior {
        knots.push(i as f64 / (interior + 1) as f64);
    }
    knots.extend(std::iter::repeat_n(1.0, p + 1));
    knots
}

/// De Boor evaluation at `u ∈ [0, 1]`.
fn de_boor<T: Scalar>(ctrl: &[Vec3<T>], knots: &[f64], p: usize, u: f64) -> Vec3<T> {
    let n = ctrl.len();
    // span k with knots[k] <= u < knots[k+1], the last span closing at u = 1
    let mut k = p;
    while k < n - 1 && u >= knots[k + 1] {
        k += 1;
    }
    let mut d: Vec<Vec3<T>> = (0..=p).map(|j| ctrl[j + k - p]).collect();
    for r in 1..=p {
        for j in (r..=p).rev() {
            let i = j + k - p;
            let denom = knots[i + p + 1 - r] - knots[i];
            let a = if denom > 0.0 {
                (u - knots[i]) / denom
            } else {
                0.0
            };
            let a = T::lit(a);
            d[j] = d[j - 1] * (T::one() - a) + d[j] * a;
        }
    }
    d[p]
}

/// Sampled clamped B-spline through the control points at `u_k = k / (m - 1)`.
pub fn bspline_samples<T: Scalar>(ctrl: &[Vec3<T>], m: usize) -> Vec<Vec3<T>> {
    let p = SPLINE_DEGREE.min(ctrl.len() - 1);
    let knots = clamped_knots(ctrl.len(), p);
    (0..m)
        .map(|k| {
            let u = if m > 1 {
                k as f64 / (m - 1) as f64
            } else {
                0.0
            };
            de_boor(ctrl, &knots, p, u)
        })
        .collect()
}

fn lerp_mat<T: Scalar>(a: &Mat3<T>, b: &Mat3<T>, t: T) -> Mat3<T> {
    let mut m = *a;
    for r in 0..3 {
        for c in 0..3 {
            m.m[r][c] = a.m[r][c] + (b.m[r][c] - a.m[r][c]) * t;
        }
    }
    m
}

/// Interpolates `(|keys| - 1) · samples_per_segment + 1` cameras through the keys.
pub fn interpolate<T: Scalar>(
    keys: &[Camera<T>],
    cfg: &TrajectoryConfig,
) -> Result<Vec<Camera<T>>> {
    if keys.len() < 2 {
        return Err(Error::Config(format!(
            "trajectory needs at least 2 keys, got {}",
            keys.len()
        )));
    }
    if cfg.samples_per_segment == 0 {
        return Err(Error::Config(
            "samples_per_segment must be at least 1".into(),
        ));
    }
    let (w, h) = (keys[0].width, keys[0].height);
    if keys.iter().any(|k| k.width != w || k.height != h) {
        return Err(Error::Shape("trajectory keys differ in image size".into()));
    }
    let poses: Vec<_> = keys.iter().map(decompose).collect();
    let m = (keys.len() - 1) * cfg.samples_per_segment + 1;
    let pos = bspline_samples(&poses.iter().map(|p| p.position).collect::<Vec<_>>(), m);
    let look = bspline_samples(&poses.iter().map(|p| p.look_at).collect::<Vec<_>>(), m);
    let up = bspline_samples(&poses.iter().map(|p| p.up).collect::<Vec<_>>(), m);
    let segments = keys.len() - 1;
    let mut out = Vec::with_capacity(m);
    for k in 0..m {
        let s = k as f64 * segments as f64 / (m - 1) as f64;
        let i = (s.floor() as usize).min(segments - 1);
        let t = T::lit(s - i as f64);
        let (a, b) = (&keys[i], &keys[i + 1]);
        let intrinsics = if a.intrinsics == b.intrinsics {
            a.intrinsics
        } else {
            lerp_mat(&a.intrinsics, &b.intrinsics, t)
        };
        let near = a.near + (b.near - a.near) * t;
        let far = a.far + (b.far - a.far) * t;
        let up_len = up[k].norm();
        let up_k = if up_len > T::zero() {
            up[k] * (T::one() / up_len)
        } else {
            up[k]
        };
        let r = look_rotation(pos[k], look[k], up_k).ok_or_else(|| Error::Trajectory {
            sample: k,
            message: "up vector parallel to the viewing direction".into(),
        })?;
        let cam = Camera::new(intrinsics, Se3::new(r, -r.mul_vec(pos[k])), w, h, near, far)
            .map_err(|e| Error::Trajectory {
                sample: k,
                message: e.to_string(),
            })?;
        out.push(cam);
    }
    Ok(out)
}

/// Picks `count` cameras at evenly spaced indices, always including both ends.
pub fn resample<T: Scalar>(cams: &[Camera<T>], count: usize) -> Vec<Camera<T>> {
    if cams.is_empty() || count == 0 {
        return Vec::new();
    }
    if count == 1 {
        return vec![cams[0].clone()];
    }
    let last = (cams.len() - 1) as f64;
    (0..count)
        .map(|k| cams[(k as f64 * last / (count - 1) as f64).round() as usize].clone())
        .collect()
}
