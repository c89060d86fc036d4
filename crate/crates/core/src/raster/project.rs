use std::cmp::Ordering;

use crate::camera::Camera;
use crate::cloud::GaussianCloud;
use crate::linalg::{Mat3, Vec3};
use crate::scalar::{sigmoid, Scalar};
use crate::sh;

use super::{ProjectedSplat, RasterConfig};

/// Intermediate quantities of one projection, shared with the backward pass.
pub(crate) struct Geometry<T> {
    pub cam_point: Vec3<T>,
    /// Rows of `J W`, the linearized world-to-pixel map.
    pub t0: Vec3<T>,
    pub t1: Vec3<T>,
    pub cov_world: Mat3<T>,
    /// Unit view direction from the camera center to the mean.
    pub view_dir: Vec3<T>,
    pub view_dist: T,
    /// SH color before clamping.
    pub color_raw: [T; 3],
}

pub(crate) fn geometry<T: Scalar>(
    cloud: &GaussianCloud<T>,
    i: usize,
    cam: &Camera<T>,
    cfg: &RasterConfig,
) -> Option<Geometry<T>> {
    let p = cloud.position(i);
    let pc = cam.world_to_cam(p);
    if !(pc.z >= cam.near && pc.z <= cam.far) {
        return None;
    }
    let (fx, fy, s) = (cam.fx(), cam.fy(), cam.skew());
    let inv_z = T::one() / pc.z;
    let inv_z2 = inv_z * inv_z;
    let j0 = Vec3::new(fx * inv_z, s * inv_z, -(fx * pc.x + s * pc.y) * inv_z2);
    let j1 = Vec3::new(T::zero(), fy * inv_z, -fy * pc.y * inv_z2);
    let w = &cam.pose_world_to_cam.rotation;
    // Row i of J W is Wᵀ applied to row i of J.
    let wt = w.transpose();
    let t0 = wt.mul_vec(j0);
    let t1 = wt.mul_vec(j1);

    let v = p - cam.center();
    let view_dist = v.norm();
    let view_dir = if view_dist > T::zero() {
        v * (T::one() / view_dist)
    } else {
        Vec3::new(T::zero(), T::zero(), T::one())
    };
    let degree = cfg.sh_degree_active.min(cloud.sh_degree);
    let color_raw = sh::eval_color(degree, cloud.sh(i), view_dir);
    Some(Geometry {
        cam_point: pc,
        t0,
        t1,
        cov_world: cloud.covariance(i),
        view_dir,
        view_dist,
        color_raw,
    })
}

/// Projects primitive `i`; `None` when it is clipped by the depth planes or can never reach
/// the alpha cutoff.
pub fn project_splat<T: Scalar>(
    cloud: &GaussianCloud<T>,
    i: usize,
    cam: &Camera<T>,
    cfg: &RasterConfig,
) -> Option<ProjectedSplat<T>> {
    let opacity = sigmoid(cloud.opacities_raw[i]);
    let cutoff = T::lit(cfg.alpha_cutoff);
    if cfg.alpha_cutoff > 0.0 && opacity < cutoff {
        return None;
    }
    let g = geometry(cloud, i, cam, cfg)?;
    let st0 = g.cov_world.mul_vec(g.t0);
    let st1 = g.cov_world.mul_vec(g.t1);
    let floor = T::lit(cfg.cov_floor);
    let sxx = g.t0.dot(st0) + floor;
    let sxy = g.t0.dot(st1);
    let syy = g.t1.dot(st1) + floor;
    let det = sxx * syy - sxy * sxy;
    if !(det > T::zero()) {
        return None;
    }
    let inv_cov2d = [syy / det, -sxy / det, sxx / det];
    let half = T::lit(0.5);
    let mid = half * (sxx + syy);
    let lambda_max = mid + (mid * mid - det).max(T::zero()).sqrt();
    let radius_px = T::lit(3.0) * lambda_max.sqrt();
    let extent_px = if cfg.alpha_cutoff > 0.0 {
        (T::lit(2.0) * lambda_max * (opacity / cutoff).ln().max(T::zero())).sqrt()
    } else {
        T::infinity()
    };
    let (fx, fy, s) = (cam.fx(), cam.fy(), cam.skew());
    let pc = g.cam_point;
    let mean2d = [
        (fx * pc.x + s * pc.y) / pc.z + cam.cx(),
        fy * pc.y / pc.z + cam.cy(),
    ];
    Some(ProjectedSplat {
        index: i,
        mean2d,
        cov2d: [sxx, sxy, syy],
        inv_cov2d,
        depth_cam: pc.z,
        color_eval: g.color_raw.map(|c| c.max(T::zero()).min(T::one())),
        opacity,
        radius_px,
        extent_px,
    })
}

/// Projects every primitive, dropping the invisible ones, in primitive order.
pub fn project_splats<T: Scalar>(
    cloud: &GaussianCloud<T>,
    cam: &Camera<T>,
    cfg: &RasterConfig,
) -> Vec<ProjectedSplat<T>> {
    (0..cloud.len())
        .filter_map(|i| project_splat(cloud, i, cam, cfg))
        .collect()
}

/// Front-to-back order by camera depth, ties broken by primitive index.
pub fn sort_splats<T: Scalar>(splats: &mut [ProjectedSplat<T>]) {
    splats.sort_by(|a, b| {
        a.depth_cam
            .partial_cmp(&b.depth_cam)
            .unwrap_or(Ordering::Equal)
            .then(a.index.cmp(&b.index))
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Se3;

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

    #[test]
    fn isotropic_splat_on_axis() {
        let mut cloud = GaussianCloud::<f64>::zeros(1, 0);
        cloud.positions = vec![0.0, 0.0, 2.0];
        cloud.scales_raw = vec![0.1f64.ln(); 3];
        cloud.opacities_raw = vec![3.0];
        let cam = camera(17, 17, 20.0);
        let cfg = RasterConfig::default();
        let s = project_splat(&cloud, 0, &cam, &cfg).unwrap();
        assert_eq!(s.mean2d, [8.0, 8.0]);
        // (f σ / z)² + floor = (20 · 0.1 / 2)² + 0.3
        let var = 1.0 + 0.3;
        assert!((s.cov2d[0] - var).abs() < 1e-12);
        assert!(s.cov2d[1].abs() < 1e-12);
        assert!((s.cov2d[2] - var).abs() < 1e-12);
        assert!((s.radius_px - 3.0 * var.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn inverse_covariance_is_exact_inverse() {
        let mut cloud = GaussianCloud::<f64>::zeros(1, 0);
        cloud.positions = vec![0.3, -0.2, 3.0];
        cloud.scales_raw = vec![-1.0, -2.5, -1.7];
        cloud.rotations = vec![0.8, 0.3, -0.4, 0.2];
        let cam = camera(32, 24, 30.0);
        let s = project_splat(&cloud, 0, &cam, &RasterConfig::default()).unwrap();
        let [sxx, sxy, syy] = s.cov2d;
        let [a, b, c] = s.inv_cov2d;
        assert!((sxx * a + sxy * b - 1.0).abs() < 1e-9);
        assert!((sxx * b + sxy * c).abs() < 1e-9);
        assert!((sxy * b + syy * c - 1.0).abs() < 1e-9);
    }

    #[test]
    fn behind_near_plane_is_culled() {
        let mut cloud = GaussianCloud::<f64>::zeros(2, 0);
        cloud.positions = vec![0.0, 0.0, 0.05, 0.0, 0.0, -1.0];
        let cam = camera(8, 8, 8.0);
        assert!(project_splats(&cloud, &cam, &RasterConfig::default()).is_empty());
    }

    #[test]
    fn sorting_breaks_ties_by_index() {
        let mut cloud = GaussianCloud::<f64>::zeros(3, 0);
        cloud.positions = vec![0.0, 0.0, 2.0, 0.1, 0.0, 1.0, -0.1, 0.0, 2.0];
        let cam = camera(8, 8, 8.0);
        let mut s = project_splats(&cloud, &cam, &RasterConfig::default());
        sort_splats(&mut s);
        let order: Vec<usize> = s.iter().map(|s| s.index).collect();
        assert_eq!(order, vec![1, 0, 2]);
    }
}
