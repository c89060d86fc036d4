//! Analytic gradients of the rendered color image with respect to raw splat parameters.

use rayon::prelude::*;

use crate::camera::Camera;
use crate::cloud::GaussianCloud;
use crate::error::{Error, Result};
use crate::linalg::{Mat3, Vec3};
use crate::raster::project::geometry;
use crate::raster::tile::{prepare, splat_gamma};
use crate::raster::{ProjectedSplat, RasterConfig, MAX_GAMMA};
use crate::scalar::Scalar;
use crate::sh;

/// Gradients mirroring the raw fields of a [`GaussianCloud`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradBuffer<T> {
    pub positions: Vec<T>,
    pub opacities_raw: Vec<T>,
    pub sh_coeffs: Vec<T>,
    pub scales_raw: Vec<T>,
    pub rotations: Vec<T>,
}

impl<T: Scalar> GradBuffer<T> {
    pub fn zeros_like(cloud: &GaussianCloud<T>) -> Self {
        Self {
            positions: vec![T::zero(); cloud.positions.len()],
            opacities_raw: vec![T::zero(); cloud.opacities_raw.len()],
            sh_coeffs: vec![T::zero(); cloud.sh_coeffs.len()],
            scales_raw: vec![T::zero(); cloud.scales_raw.len()],
            rotations: vec![T::zero(); cloud.rotations.len()],
        }
    }

    /// Groups in the same order and with the same names as [`GaussianCloud::groups`].
    pub fn groups(&self) -> [(&'static str, &[T]); 5] {
        [
            ("positions", &self.positions),
            ("opacities", &self.opacities_raw),
            ("sh", &self.sh_coeffs),
            ("scales", &self.scales_raw),
            ("rotations", &self.rotations),
        ]
    }

    pub fn is_zero(&self) -> bool {
        self.groups()
            .iter()
            .all(|(_, g)| g.iter().all(|v| *v == T::zero()))
    }

    /// First group holding a non-finite value.
    pub fn non_finite_group(&self) -> Option<&'static str> {
        self.groups()
            .into_iter()
            .find(|(_, g)| g.iter().any(|v| !v.is_finite()))
            .map(|(name, _)| name)
    }
}

/// Per-pixel color gradients and per-splat screen-space gradients of one tile.
type TileGrads<T> = (Vec<[T; 3]>, Vec<Grad2d<T>>);

/// Loss gradient with respect to one projected splat's image-space quantities.
#[derive(Clone, Copy, Debug, Default)]
struct Grad2d<T> {
    mean: [T; 2],
    conic: [T; 3],
    opacity: T,
    color: [T; 3],
}

impl<T: Scalar> Grad2d<T> {
    fn zero() -> Self {
        Self {
            mean: [T::zero(); 2],
            conic: [T::zero(); 3],
            opacity: T::zero(),
            color: [T::zero(); 3],
        }
    }

    fn add(&mut self, o: &Self) {
        for k in 0..2 {
            self.mean[k] += o.mean[k];
        }
        for k in 0..3 {
            self.conic[k] += o.conic[k];
            self.color[k] += o.color[k];
        }
        self.opacity += o.opacity;
    }
}

struct Contribution<T> {
    local: usize,
    gamma: T,
    transmittance: T,
    g: T,
    dx: T,
    dy: T,
    saturated: bool,
}

/// Renders the color image and back-propagates `upstream = dL/dC` (`H × W × 3`) to raw
/// parameters.
pub fn render_color_with_grad<T: Scalar>(
    cloud: &GaussianCloud<T>,
    cam: &Camera<T>,
    cfg: &RasterConfig,
    upstream: &[T],
) -> Result<(Vec<T>, GradBuffer<T>)> {
    let (w, h) = (cam.width, cam.height);
    if upstream.len() != 3 * w * h {
        return Err(Error::Shape(format!(
            "upstream gradient has {} values, image has {}",
            upstream.len(),
            3 * w * h
        )));
    }
    let prep = prepare(cloud, cam, cfg)?;
    let cutoff = T::lit(cfg.alpha_cutoff);
    let floor = T::lit(cfg.transmittance_floor);
    let gmax = T::lit(MAX_GAMMA);
    let bins = &prep.bins;
    let splats = &prep.splats;

    let tiles: Vec<TileGrads<T>> = (0..bins.lists.len())
        .into_par_iter()
        .map(|tile| {
            let (x0, y0, x1, y1) = bins.rect(tile, w, h);
            let list = &bins.lists[tile];
            let mut grads = vec![Grad2d::zero(); list.len()];
            let mut colors = Vec::with_capacity((x1 - x0) * (y1 - y0));
            let mut contrib: Vec<Contribution<T>> = Vec::new();
            for y in y0..y1 {
                for x in x0..x1 {
                    let (px, py) = (T::from_usize(x), T::from_usize(y));
                    contrib.clear();
                    let mut trans = T::one();
                    let mut color = [T::zero(); 3];
                    for (local, &k) in list.iter().enumerate() {
                        let s = &splats[k as usize];
                        let (gamma, g, dx, dy) = splat_gamma(s, px, py);
                        if gamma < cutoff {
                            continue;
                        }
                        let wgt = gamma * trans;
                        for c in 0..3 {
                            color[c] += s.color_eval[c] * wgt;
                        }
                        contrib.push(Contribution {
                            local,
                            gamma,
                            transmittance: trans,
                            g,
                            dx,
                            dy,
                            saturated: s.opacity * g >= gmax,
                        });
                        trans *= T::one() - gamma;
                        if trans < floor {
                            break;
                        }
                    }
                    colors.push(color);
                    let p = y * w + x;
                    let dc = [upstream[3 * p], upstream[3 * p + 1], upstream[3 * p + 2]];
                    if dc.iter().all(|v| *v == T::zero()) {
                        continue;
                    }
                    // Gradient w.r.t. the transmittance entering the next splat.
                    let mut d_trans_next = T::zero();
                    for ct in contrib.iter().rev() {
                        let s = &splats[list[ct.local] as usize];
                        let gr = &mut grads[ct.local];
                        let wgt = ct.gamma * ct.transmittance;
                        let dc_dot = dc[0] * s.color_eval[0]
                            + dc[1] * s.color_eval[1]
                            + dc[2] * s.color_eval[2];
                        for c in 0..3 {
                            gr.color[c] += dc[c] * wgt;
                        }
                        let d_gamma = (dc_dot - d_trans_next) * ct.transmittance;
                        d_trans_next = dc_dot * ct.gamma + d_trans_next * (T::one() - ct.gamma);
                        if ct.saturated {
                            continue;
                        }
                        gr.opacity += d_gamma * ct.g;
                        let dq = d_gamma * s.opacity * ct.g * T::lit(-0.5);
                        let (dx, dy) = (ct.dx, ct.dy);
                        let [a, b, c] = s.inv_cov2d;
                        let two = T::lit(2.0);
                        gr.conic[0] += dq * dx * dx;
                        gr.conic[1] += dq * two * dx * dy;
                        gr.conic[2] += dq * dy * dy;
                        // dx = px - μx
                        gr.mean[0] -= dq * two * (a * dx + b * dy);
                        gr.mean[1] -= dq * two * (b * dx + c * dy);
                    }
                }
            }
            (colors, grads)
        })
        .collect();

    let mut image = vec![T::zero(); 3 * w * h];
    let mut per_splat = vec![Grad2d::zero(); splats.len()];
    for (tile, (colors, grads)) in tiles.into_iter().enumerate() {
        let (x0, y0, x1, _) = bins.rect(tile, w, h);
        let tw = x1 - x0;
        for (k, c) in colors.iter().enumerate() {
            let p = (y0 + k / tw) * w + x0 + k % tw;
            image[3 * p..3 * p + 3].copy_from_slice(c);
        }
        for (local, g) in grads.iter().enumerate() {
            per_splat[bins.lists[tile][local] as usize].add(g);
        }
    }

    let chained: Vec<SplatGrad<T>> = splats
        .par_iter()
        .zip(per_splat.par_iter())
        .map(|(s, g)| chain_to_raw(cloud, cam, cfg, s, g))
        .collect();
    let mut out = GradBuffer::zeros_like(cloud);
    let b3 = cloud.num_basis() * 3;
    for (s, g) in splats.iter().zip(chained) {
        let i = s.index;
        out.positions[3 * i..3 * i + 3].copy_from_slice(&g.position.to_array());
        out.opacities_raw[i] = g.opacity_raw;
        out.sh_coeffs[i * b3..(i + 1) * b3].copy_from_slice(&g.sh[..b3]);
        out.scales_raw[3 * i..3 * i + 3].copy_from_slice(&g.scale_raw.to_array());
        out.rotations[4 * i..4 * i + 4].copy_from_slice(&g.rotation);
    }
    Ok((image, out))
}

struct SplatGrad<T> {
    position: Vec3<T>,
    opacity_raw: T,
    sh: [T; 48],
    scale_raw: Vec3<T>,
    rotation: [T; 4],
}

fn chain_to_raw<T: Scalar>(
    cloud: &GaussianCloud<T>,
    cam: &Camera<T>,
    cfg: &RasterConfig,
    s: &ProjectedSplat<T>,
    g: &Grad2d<T>,
) -> SplatGrad<T> {
    let i = s.index;
    let geo = geometry(cloud, i, cam, cfg).expect("projected splat has geometry");
    let zero = T::zero();
    let one = T::one();
    let two = T::lit(2.0);

    // color clamp, SH coefficients and view direction
    let degree = cfg.sh_degree_active.min(cloud.sh_degree);
    let mut dcol = g.color;
    for c in 0..3 {
        if geo.color_raw[c] < zero || geo.color_raw[c] > one {
            dcol[c] = zero;
        }
    }
    let basis = sh::basis(degree, geo.view_dir);
    let nb = cloud.num_basis();
    let mut d_sh = [zero; 48];
    for k in 0..nb {
        for c in 0..3 {
            d_sh[3 * k + c] = basis[k] * dcol[c];
        }
    }
    let mut d_pos = Vec3::zeros();
    if degree > 0 {
        let bg = sh::basis_grad(degree, geo.view_dir);
        let coeffs = cloud.sh(i);
        let mut d_dir = Vec3::zeros();
        for k in 1..crate::cloud::sh_basis_count(degree).min(nb) {
            let w =
                coeffs[3 * k] * dcol[0] + coeffs[3 * k + 1] * dcol[1] + coeffs[3 * k + 2] * dcol[2];
            d_dir += bg[k] * w;
        }
        let d = geo.view_dir;
        d_pos += (d_dir - d * d.dot(d_dir)) * (one / geo.view_dist);
    }

    // activated opacity
    let alpha = s.opacity;
    let d_opacity_raw = g.opacity * alpha * (one - alpha);

    // conic -> floored image covariance: d(Σ'⁻¹) = -Σ'⁻¹ dΣ' Σ'⁻¹
    let [a, b, c] = s.inv_cov2d;
    let [ga, gb, gc] = g.conic;
    let gxx = -(ga * a * a + gb * a * b + gc * b * b);
    let gxy = -(two * ga * a * b + gb * (a * c + b * b) + two * gc * b * c);
    let gyy = -(ga * b * b + gb * b * c + gc * c * c);

    // image covariance -> world covariance and the linearized projection rows
    let (t0, t1) = (geo.t0, geo.t1);
    let sigma = &geo.cov_world;
    let st0 = sigma.mul_vec(t0);
    let st1 = sigma.mul_vec(t1);
    let mut g_sigma = Mat3::zeros();
    for r in 0..3 {
        for q in 0..3 {
            g_sigma.m[r][q] = gxx * t0[r] * t0[q] + gxy * t0[r] * t1[q] + gyy * t1[r] * t1[q];
        }
    }
    let d_t0 = st0 * (two * gxx) + st1 * gxy;
    let d_t1 = st1 * (two * gyy) + st0 * gxy;

    // projection rows -> Jacobian entries -> camera-space mean
    let w = &cam.pose_world_to_cam.rotation;
    let dj0 = w.mul_vec(d_t0);
    let dj1 = w.mul_vec(d_t1);
    let (fx, fy, sk) = (cam.fx(), cam.fy(), cam.skew());
    let pc = geo.cam_point;
    let iz = one / pc.z;
    let iz2 = iz * iz;
    let iz3 = iz2 * iz;
    let num_u = fx * pc.x + sk * pc.y;
    let mut d_pc = Vec3::new(
        -dj0.z * fx * iz2,
        -dj0.z * sk * iz2 - dj1.z * fy * iz2,
        -dj0.x * fx * iz2 - dj0.y * sk * iz2 + dj0.z * two * num_u * iz3 - dj1.y * fy * iz2
            + dj1.z * two * fy * pc.y * iz3,
    );
    let [gmx, gmy] = g.mean;
    d_pc.x += gmx * fx * iz;
    d_pc.y += gmx * sk * iz + gmy * fy * iz;
    d_pc.z -= gmx * num_u * iz2 + gmy * fy * pc.y * iz2;
    d_pos += w.transpose().mul_vec(d_pc);

    // Σ = M Mᵀ with M = R diag(s)
    let q_unit = cloud.rotation_unit(i);
    let rot = crate::linalg::unit_quat_to_rotmat(q_unit);
    let scale = cloud.scale(i);
    let m = rot.matmul(&Mat3::diag(scale));
    let g_sym = Mat3::from_rows(std::array::from_fn(|r| {
        std::array::from_fn(|q| g_sigma.m[r][q] + g_sigma.m[q][r])
    }));
    let d_m = g_sym.matmul(&m);
    let mut d_rot = Mat3::zeros();
    let mut d_scale_raw = Vec3::zeros();
    for col in 0..3 {
        let mut ds = zero;
        for r in 0..3 {
            d_rot.m[r][col] = d_m.m[r][col] * scale[col];
            ds += d_m.m[r][col] * rot.m[r][col];
        }
        d_scale_raw[col] = ds * scale[col];
    }

    let dq_unit = rotmat_grad_to_quat(q_unit, &d_rot);
    let raw = cloud.rotation_raw(i);
    let norm = (raw[0] * raw[0] + raw[1] * raw[1] + raw[2] * raw[2] + raw[3] * raw[3]).sqrt();
    let mut rotation = [zero; 4];
    if norm > zero {
        let proj: T = (0..4).map(|k| q_unit[k] * dq_unit[k]).sum();
        for k in 0..4 {
            rotation[k] = (dq_unit[k] - q_unit[k] * proj) / norm;
        }
    }

    SplatGrad {
        position: d_pos,
        opacity_raw: d_opacity_raw,
        sh: d_sh,
        scale_raw: d_scale_raw,
        rotation,
    }
}

/// Pulls `dL/dR` back to the unit quaternion `(w, x, y, z)`.
fn rotmat_grad_to_quat<T: Scalar>(q: [T; 4], g: &Mat3<T>) -> [T; 4] {
    let [w, x, y, z] = q;
    let m = &g.m;
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    let dw =
        two * (-z * m[0][1] + y * m[0][2] + z * m[1][0] - x * m[1][2] - y * m[2][0] + x * m[2][1]);
    let dx = two
        * (y * m[0][1] + z * m[0][2] + y * m[1][0] - w * m[1][2] + z * m[2][0] + w * m[2][1])
        - four * x * (m[1][1] + m[2][2]);
    let dy = two
        * (x * m[0][1] + w * m[0][2] + x * m[1][0] + z * m[1][2] - w * m[2][0] + z * m[2][1])
        - four * y * (m[0][0] + m[2][2]);
    let dz = two
        * (-w * m[0][1] + x * m[0][2] + w * m[1][0] + y * m[1][2] + x * m[2][0] + y * m[2][1])
        - four * z * (m[0][0] + m[1][1]);
    [dw, dx, dy, dz]
}
