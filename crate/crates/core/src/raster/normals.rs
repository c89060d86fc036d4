use crate::camera::Camera;
use crate::linalg::Vec3;
use crate::scalar::Scalar;

use super::RasterConfig;

/// Screen-space normals from finite differences of the back-projected depth map.
///
/// Central differences in the interior, one-sided at the borders. A pixel is valid only when
/// it and every neighbor it reads have alpha above `normal_tau`. Normals face the camera.
pub fn compute_normals<T: Scalar>(
    depth: &[T],
    alpha: &[T],
    cam: &Camera<T>,
    cfg: &RasterConfig,
) -> Vec<T> {
    let (w, h) = (cam.width, cam.height);
    let tau = T::lit(cfg.normal_tau);
    let mut out = vec![T::zero(); 3 * w * h];
    if w < 2 || h < 2 {
        return out;
    }
    let points: Vec<Vec3<T>> = (0..w * h)
        .map(|p| {
            let (x, y) = (p % w, p / w);
            cam.unproject_unit_depth(T::from_usize(x), T::from_usize(y)) * depth[p]
        })
        .collect();
    let neighbors = |i: usize, n: usize| -> (usize, usize) {
        if i == 0 {
            (0, 1)
        } else if i == n - 1 {
            (n - 2, n - 1)
        } else {
            (i - 1, i + 1)
        }
    };
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let (xa, xb) = neighbors(x, w);
            let (ya, yb) = neighbors(y, h);
            let used = [p, y * w + xa, y * w + xb, ya * w + x, yb * w + x];
            if used.iter().any(|&q| !(alpha[q] > tau)) {
                continue;
            }
            let du = points[y * w + xb] - points[y * w + xa];
            let dv = points[yb * w + x] - points[ya * w + x];
            let n = du.cross(dv);
            let len = n.norm();
            if !(len > T::zero()) {
                continue;
            }
            let mut n = n * (T::one() / len);
            if n.dot(points[p]) > T::zero() {
                n = -n;
            }
            out[3 * p..3 * p + 3].copy_from_slice(&n.to_array());
        }
    }
    out
}
