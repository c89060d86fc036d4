use crate::camera::Camera;
use crate::cloud::GaussianCloud;
use crate::error::Result;
use crate::scalar::Scalar;

use super::project::{project_splats, sort_splats};
use super::tile::{blend_pixel, write_pixel};
use super::{compute_normals, GpBuffer, RasterConfig};

/// Brute-force renderer: every pixel blends every globally sorted splat, without tiling.
pub fn render_reference<T: Scalar>(
    cloud: &GaussianCloud<T>,
    cam: &Camera<T>,
    cfg: &RasterConfig,
) -> Result<GpBuffer<T>> {
    cfg.validate()?;
    let mut splats = project_splats(cloud, cam, cfg);
    sort_splats(&mut splats);
    let (w, h) = (cam.width, cam.height);
    let cutoff = T::lit(cfg.alpha_cutoff);
    let floor = T::lit(cfg.transmittance_floor);
    let mut buf = GpBuffer::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let acc = blend_pixel(T::from_usize(x), T::from_usize(y), &splats, cutoff, floor);
            write_pixel(&mut buf, y * w + x, &acc);
        }
    }
    buf.normal = compute_normals(&buf.depth, &buf.alpha, cam, cfg);
    Ok(buf)
}
