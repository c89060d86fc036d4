//! Lossless patchify encoder standing in for a video autoencoder, plus the channel-stacked
//! GP-Buffer conditioning built on it.

use serde::{Deserialize, Serialize};
use splatfix_core::simulate::{SCENE_FAR, SCENE_NEAR};
use splatfix_core::{GpBufferVideo, VideoTensor};

use crate::error::{Error, Result};
use crate::mat::{Mat, Real};

pub const DEFAULT_PS: usize = 8;
pub const DEFAULT_PT: usize = 4;
/// Channels per modality after replicating one-channel maps.
pub const MODALITY_CHANNELS: usize = 3;
pub const NUM_MODALITIES: usize = 5;

/// Video and patch sizes of a latent grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentGeom {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub ps: usize,
    pub pt: usize,
}

impl LatentGeom {
    pub fn new(
        frames: usize,
        height: usize,
        width: usize,
        channels: usize,
        ps: usize,
        pt: usize,
    ) -> Result<Self> {
        let g = Self {
            frames,
            height,
            width,
            channels,
            ps,
            pt,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ps == 0 || self.pt == 0 || self.channels == 0 {
            return Err(Error::Config(
                "patch sizes and channels must be positive".into(),
            ));
        }
        if self.frames == 0
            || !self.frames.is_multiple_of(self.pt)
            || !self.height.is_multiple_of(self.ps)
            || !self.width.is_multiple_of(self.ps)
        {
            return Err(Error::Shape(format!(
                "{}x{}x{} video does not divide into {}x{}x{} patches",
                self.frames, self.height, self.width, self.pt, self.ps, self.ps
            )));
        }
        if self.height == 0 || self.width == 0 {
            return Err(Error::Shape("empty frames".into()));
        }
        Ok(())
    }

    /// Token grid `[T/pt, H/ps, W/ps]`.
    pub fn grid(&self) -> [usize; 3] {
        [
            self.frames / self.pt,
            self.height / self.ps,
            self.width / self.ps,
        ]
    }

    pub fn tokens(&self) -> usize {
        self.grid().iter().product()
    }

    pub fn token_dim(&self) -> usize {
        self.pt * self.ps * self.ps * self.channels
    }

    /// `(t, y, x)` grid coordinates of each token in storage order.
    pub fn coords(&self) -> Vec<[usize; 3]> {
        let [gt, gy, gx] = self.grid();
        let mut out = Vec::with_capacity(self.tokens());
        for t in 0..gt {
            for y in 0..gy {
                for x in 0..gx {
                    out.push([t, y, x]);
                }
            }
        }
        out
    }

    pub fn with_channels(&self, channels: usize) -> Self {
        Self { channels, ..*self }
    }
}

/// Tokens of one patchified video, one row per token.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentVideo<T> {
    pub geom: LatentGeom,
    pub tokens: Mat<T>,
}

/// Splits a video into `pt × ps × ps` patches; each token stores its patch in
/// `(frame, row, column, channel)` order.
pub fn encode<T: Real>(video: &VideoTensor<T>, ps: usize, pt: usize) -> Result<LatentVideo<T>> {
    let geom = LatentGeom::new(
        video.frames,
        video.height,
        video.width,
        video.channels,
        ps,
        pt,
    )?;
    let [_, gy, gx] = geom.grid();
    let c = video.channels;
    let row_len = ps * c;
    let mut tokens = Mat::zeros(geom.tokens(), geom.token_dim());
    for (k, [tt, ty, tx]) in geom.coords().into_iter().enumerate() {
        let out = tokens.row_mut(k);
        let mut o = 0;
        for dt in 0..pt {
            let frame = video.frame(tt * pt + dt);
            for dy in 0..ps {
                let start = ((ty * ps + dy) * video.width + tx * ps) * c;
                out[o..o + row_len].copy_from_slice(&frame[start..start + row_len]);
                o += row_len;
            }
        }
        debug_assert_eq!(k, (tt * gy + ty) * gx + tx);
    }
    Ok(LatentVideo { geom, tokens })
}

/// Inverse of [`encode`].
pub fn decode<T: Real>(latent: &LatentVideo<T>) -> Result<VideoTensor<T>> {
    let g = latent.geom;
    g.validate()?;
    if latent.tokens.shape() != (g.tokens(), g.token_dim()) {
        return Err(Error::Shape(format!(
            "latent has {:?} tokens, geometry needs {:?}",
            latent.tokens.shape(),
            (g.tokens(), g.token_dim())
        )));
    }
    let c = g.channels;
    let row_len = g.ps * c;
    let mut video = VideoTensor::zeros(g.frames, g.height, g.width, c);
    for (k, [tt, ty, tx]) in g.coords().into_iter().enumerate() {
        let src = latent.tokens.row(k);
        let mut o = 0;
        for dt in 0..g.pt {
            let frame = video.frame_mut(tt * g.pt + dt);
            for dy in 0..g.ps {
                let start = ((ty * g.ps + dy) * g.width + tx * g.ps) * c;
                frame[start..start + row_len].copy_from_slice(&src[o..o + row_len]);
                o += row_len;
            }
        }
    }
    Ok(video)
}

/// Affine maps taking each modality to `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub near: f64,
    pub far: f64,
    /// Covariance floor of the renderer; bounds inverse-covariance entries by `1/cov_floor`.
    pub cov_floor: f64,
}

impl Default for Normalization {
    fn default() -> Self {
        Self {
            near: SCENE_NEAR,
            far: SCENE_FAR,
            cov_floor: 0.3,
        }
    }
}

impl Normalization {
    pub fn validate(&self) -> Result<()> {
        if !(self.far > self.near) || !(self.cov_floor > 0.0) {
            return Err(Error::Config(format!("bad normalization {self:?}")));
        }
        Ok(())
    }

    fn clamp<T: Real>(v: T) -> T {
        v.max(-T::one()).min(T::one())
    }

    pub fn unit<T: Real>(v: T) -> T {
        Self::clamp(T::lit(2.0) * v - T::one())
    }

    pub fn depth<T: Real>(&self, d: T) -> T {
        let (n, f) = (T::lit(self.near), T::lit(self.far));
        Self::clamp(T::lit(2.0) * (d - n) / (f - n) - T::one())
    }

    /// `[a, b, c]` inverse-covariance entries.
    pub fn uncertainty<T: Real>(&self, v: [T; 3]) -> [T; 3] {
        let s = T::lit(self.cov_floor);
        [
            Self::unit(v[0] * s),
            Self::clamp(v[1] * s),
            Self::unit(v[2] * s),
        ]
    }

    /// Normalized color back to `[0, 1]`.
    pub fn color_out<T: Real>(v: T) -> T {
        ((v + T::one()) * T::lit(0.5)).max(T::zero()).min(T::one())
    }
}

/// Per-modality keep flags, in canonical modality order.
pub type ModalityMask = [bool; NUM_MODALITIES];

pub const KEEP_ALL: ModalityMask = [true; NUM_MODALITIES];

fn replicate<T: Real>(v: &VideoTensor<T>, f: impl Fn(T) -> T) -> VideoTensor<T> {
    let mut out = VideoTensor::zeros(v.frames, v.height, v.width, MODALITY_CHANNELS);
    for (o, x) in out.data.chunks_exact_mut(MODALITY_CHANNELS).zip(&v.data) {
        o.fill(f(*x));
    }
    out
}

/// Normalized three-channel videos of the five modalities.
pub fn normalized_modalities<T: Real>(
    buf: &GpBufferVideo<T>,
    norm: &Normalization,
) -> Result<[VideoTensor<T>; 5]> {
    norm.validate()?;
    let color = buf.color.map(Normalization::unit);
    let alpha = replicate(&buf.alpha, Normalization::unit);
    let depth = replicate(&buf.depth, |d| norm.depth(d));
    let normal = buf.normal.map(Normalization::clamp);
    let mut unc = buf.uncertainty.clone();
    for px in unc.data.chunks_exact_mut(3) {
        let n = norm.uncertainty([px[0], px[1], px[2]]);
        px.copy_from_slice(&n);
    }
    Ok([color, alpha, depth, normal, unc])
}

/// Encodes each normalized modality and stacks the tokens channel-wise: `N × 5·C_lat`.
/// Dropped modalities contribute zeros.
pub fn encode_gpbuffer<T: Real>(
    buf: &GpBufferVideo<T>,
    norm: &Normalization,
    keep: ModalityMask,
    ps: usize,
    pt: usize,
) -> Result<Mat<T>> {
    let [t, h, w, _] = buf.color.dims();
    for (name, v) in splatfix_core::raster::MODALITIES
        .iter()
        .zip(buf.modalities())
    {
        if [v.frames, v.height, v.width] != [t, h, w] {
            return Err(Error::Shape(format!(
                "{name} is {:?}, color is {:?}",
                v.dims(),
                buf.color.dims()
            )));
        }
    }
    let mods = normalized_modalities(buf, norm)?;
    let mut parts = Vec::with_capacity(NUM_MODALITIES);
    for m in &mods {
        parts.push(encode(m, ps, pt)?);
    }
    let tokens = parts[0].geom.tokens();
    let c = parts[0].geom.token_dim();
    let mut out = Mat::zeros(tokens, NUM_MODALITIES * c);
    for (m, part) in parts.iter().enumerate() {
        if !keep[m] {
            continue;
        }
        for k in 0..tokens {
            out.row_mut(k)[m * c..(m + 1) * c].copy_from_slice(part.tokens.row(k));
        }
    }
    Ok(out)
}

/// Zeros the channel blocks of dropped modalities in an already encoded conditioning matrix.
pub fn apply_modality_mask<T: Real>(z: &Mat<T>, keep: ModalityMask) -> Mat<T> {
    let c = z.cols / NUM_MODALITIES;
    let mut out = z.clone();
    for k in 0..out.rows {
        let row = out.row_mut(k);
        for (m, kept) in keep.iter().enumerate() {
            if !kept {
                row[m * c..(m + 1) * c].fill(T::zero());
            }
        }
    }
    out
}
