use rayon::prelude::*;

use crate::camera::Camera;
use crate::cloud::GaussianCloud;
use crate::error::Result;
use crate::scalar::Scalar;

use super::project::{project_splats, sort_splats};
use super::{compute_normals, GpBuffer, ProjectedSplat, RasterConfig, MAX_GAMMA};

/// Accumulated blend state of one pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelAccum<T> {
    pub color: [T; 3],
    pub alpha: T,
    /// Unnormalized `Σ z w`.
    pub depth_sum: T,
    pub uncertainty: [T; 3],
    pub transmittance: T,
}

impl<T: Scalar> PixelAccum<T> {
    fn new() -> Self {
        Self {
            color: [T::zero(); 3],
            alpha: T::zero(),
            depth_sum: T::zero(),
            uncertainty: [T::zero(); 3],
            transmittance: T::one(),
        }
    }

    pub fn depth(&self) -> T {
        if self.alpha > T::zero() {
            self.depth_sum / self.alpha
        } else {
            T::zero()
        }
    }
}

/// Blend weight of `s` at pixel `(px, py)` before the cutoff test.
#[inline]
pub(crate) fn splat_gamma<T: Scalar>(s: &ProjectedSplat<T>, px: T, py: T) -> (T, T, T, T) {
    let dx = px - s.mean2d[0];
    let dy = py - s.mean2d[1];
    // outside the cutoff box gamma is below the cutoff; skip the exp
    if dx.abs() > s.extent_px || dy.abs() > s.extent_px {
        return (T::zero(), T::zero(), dx, dy);
    }
    let [a, b, c] = s.inv_cov2d;
    let q = a * dx * dx + T::lit(2.0) * b * dx * dy + c * dy * dy;
    let g = (T::lit(-0.5) * q).exp();
    let gamma = (s.opacity * g).min(T::lit(MAX_GAMMA));
    (gamma, g, dx, dy)
}

/// Front-to-back blend of depth-sorted splats at pixel `(px, py)`.
pub fn blend_pixel<'a, T: Scalar>(
    px: T,
    py: T,
    splats: impl IntoIterator<Item = &'a ProjectedSplat<T>>,
    alpha_cutoff: T,
    transmittance_floor: T,
) -> PixelAccum<T> {
    let mut acc = PixelAccum::new();
    for s in splats {
        let (gamma, ..) = splat_gamma(s, px, py);
        if gamma < alpha_cutoff {
            continue;
        }
        let w = gamma * acc.transmittance;
        for ch in 0..3 {
            acc.color[ch] += s.color_eval[ch] * w;
            acc.uncertainty[ch] += s.inv_cov2d[ch] * w;
        }
        acc.alpha += w;
        acc.depth_sum += s.depth_cam * w;
        acc.transmittance *= T::one() - gamma;
        if acc.transmittance < transmittance_floor {
            break;
        }
    }
    acc
}

/// Per-tile lists of indices into a depth-sorted splat array.
#[derive(Clone, Debug)]
pub struct TileBins {
    pub tile_size: usize,
    pub tiles_x: usize,
    pub tiles_y: usize,
    pub lists: Vec<Vec<u32>>,
}

impl TileBins {
    /// Bins each splat into every tile its extent square touches. Lists inherit the input
    /// (depth) order.
    pub fn build<T: Scalar>(
        splats: &[ProjectedSplat<T>],
        width: usize,
        height: usize,
        tile_size: usize,
    ) -> Self {
        let tiles_x = width.div_ceil(tile_size);
        let tiles_y = height.div_ceil(tile_size);
        let mut lists = vec![Vec::new(); tiles_x * tiles_y];
        let wmax = T::from_usize(width - 1);
        let hmax = T::from_usize(height - 1);
        for (k, s) in splats.iter().enumerate() {
            let r = s.extent_px;
            let (x0, x1) = (s.mean2d[0] - r, s.mean2d[0] + r);
            let (y0, y1) = (s.mean2d[1] - r, s.mean2d[1] + r);
            if x1 < T::zero() || y1 < T::zero() || x0 > wmax || y0 > hmax {
                continue;
            }
            let clamp = |v: T, hi: T| v.max(T::zero()).min(hi).as_f64() as usize;
            let (px0, px1) = (clamp(x0.ceil(), wmax), clamp(x1.floor(), wmax));
            let (py0, py1) = (clamp(y0.ceil(), hmax), clamp(y1.floor(), hmax));
            if px0 > px1 || py0 > py1 {
                continue;
            }
            for ty in py0 / tile_size..=py1 / tile_size {
                for tx in px0 / tile_size..=px1 / tile_size {
                    lists[ty * tiles_x + tx].push(k as u32);
                }
            }
        }
        Self {
            tile_size,
            tiles_x,
            tiles_y,
            lists,
        }
    }

    /// Pixel rectangle `(x0, y0, x1, y1)` (exclusive end) of a tile.
    pub fn rect(&self, tile: usize, width: usize, height: usize) -> (usize, usize, usize, usize) {
        let (tx, ty) = (tile % self.tiles_x, tile / self.tiles_x);
        let x0 = tx * self.tile_size;
        let y0 = ty * self.tile_size;
        (
            x0,
            y0,
            (x0 + self.tile_size).min(width),
            (y0 + self.tile_size).min(height),
        )
    }
}

/// Depth-sorted projected splats and their tile bins for one camera.
pub(crate) struct Prepared<T> {
    pub splats: Vec<ProjectedSplat<T>>,
    pub bins: TileBins,
}

pub(crate) fn prepare<T: Scalar>(
    cloud: &GaussianCloud<T>,
    cam: &Camera<T>,
    cfg: &RasterConfig,
) -> Result<Prepared<T>> {
    cfg.validate()?;
    let mut splats = project_splats(cloud, cam, cfg);
    sort_splats(&mut splats);
    let bins = TileBins::build(&splats, cam.width, cam.height, cfg.tile_size);
    Ok(Prepared { splats, bins })
}

fn render_tiles<T: Scalar>(
    prep: &Prepared<T>,
    cam: &Camera<T>,
    cfg: &RasterConfig,
) -> Vec<(usize, Vec<PixelAccum<T>>)> {
    let cutoff = T::lit(cfg.alpha_cutoff);
    let floor = T::lit(cfg.transmittance_floor);
    let (w, h) = (cam.width, cam.height);
    (0..prep.bins.lists.len())
        .into_par_iter()
        .map(|tile| {
            let (x0, y0, x1, y1) = prep.bins.rect(tile, w, h);
            let list = &prep.bins.lists[tile];
            let mut out = Vec::with_capacity((x1 - x0) * (y1 - y0));
            for y in y0..y1 {
                for x in x0..x1 {
                    let it = list.iter().map(|&k| &prep.splats[k as usize]);
                    out.push(blend_pixel(
                        T::from_usize(x),
                        T::from_usize(y),
                        it,
                        cutoff,
                        floor,
                    ));
                }
            }
            (tile, out)
        })
        .collect()
}

/// Scatters per-tile pixel results into a buffer (normals excluded).
fn assemble<T: Scalar>(
    tiles: Vec<(usize, Vec<PixelAccum<T>>)>,
    bins: &TileBins,
    w: usize,
    h: usize,
) -> GpBuffer<T> {
    let mut buf = GpBuffer::zeros(w, h);
    for (tile, px) in tiles {
        let (x0, y0, x1, _) = bins.rect(tile, w, h);
        let tw = x1 - x0;
        for (k, acc) in px.iter().enumerate() {
            let (x, y) = (x0 + k % tw, y0 + k / tw);
            write_pixel(&mut buf, y * w + x, acc);
        }
    }
    buf
}

pub(crate) fn write_pixel<T: Scalar>(buf: &mut GpBuffer<T>, p: usize, acc: &PixelAccum<T>) {
    buf.color[3 * p..3 * p + 3].copy_from_slice(&acc.color);
    buf.uncertainty[3 * p..3 * p + 3].copy_from_slice(&acc.uncertainty);
    buf.alpha[p] = acc.alpha;
    buf.depth[p] = acc.depth();
}

/// Tiled forward renderer producing all five modalities.
pub fn render_gpbuffer<T: Scalar>(
    cloud: &GaussianCloud<T>,
    cam: &Camera<T>,
    cfg: &RasterConfig,
) -> Result<GpBuffer<T>> {
    let prep = prepare(cloud, cam, cfg)?;
    let tiles = render_tiles(&prep, cam, cfg);
    let mut buf = assemble(tiles, &prep.bins, cam.width, cam.height);
    buf.normal = compute_normals(&buf.depth, &buf.alpha, cam, cfg);
    Ok(buf)
}

/// Color channel only (`H × W × 3`), identical to [`render_gpbuffer`]'s color.
pub fn render_color<T: Scalar>(
    cloud: &GaussianCloud<T>,
    cam: &Camera<T>,
    cfg: &RasterConfig,
) -> Result<Vec<T>> {
    let prep = prepare(cloud, cam, cfg)?;
    let tiles = render_tiles(&prep, cam, cfg);
    let (w, h) = (cam.width, cam.height);
    let mut color = vec![T::zero(); 3 * w * h];
    for (tile, px) in tiles {
        let (x0, y0, x1, _) = prep.bins.rect(tile, w, h);
        let tw = x1 - x0;
        for (k, acc) in px.iter().enumerate() {
            let p = (y0 + k / tw) * w + x0 + k % tw;
            color[3 * p..3 * p + 3].copy_from_slice(&acc.color);
        }
    }
    Ok(color)
}
