use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense `T × H × W × C` frame stack, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoTensor<S> {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<S>,
    /// Informational only.
    pub frame_rate: f64,
}

impl<S: Scalar> VideoTensor<S> {
    pub fn zeros(frames: usize, height: usize, width: usize, channels: usize) -> Self {
        Self {
            frames,
            height,
            width,
            channels,
            data: vec![S::zero(); frames * height * width * channels],
            frame_rate: 0.0,
        }
    }

    pub fn from_vec(
        frames: usize,
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<S>,
    ) -> Result<Self> {
        if frames == 0 || height == 0 || width == 0 || channels == 0 {
            return Err(Error::Dimension(format!(
                "video dims must be positive, got {frames}x{height}x{width}x{channels}"
            )));
        }
        if data.len() != frames * height * width * channels {
            return Err(Error::Shape(format!(
                "{} values for a {frames}x{height}x{width}x{channels} video",
                data.len()
            )));
        }
        Ok(Self {
            frames,
            height,
            width,
            channels,
            data,
            frame_rate: 0.0,
        })
    }

    /// Stacks equally-shaped `H × W × C` frames.
    pub fn from_frames(
        frames: &[Vec<S>],
        height: usize,
        width: usize,
        channels: usize,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(frames.len() * height * width * channels);
        for (i, f) in frames.iter().enumerate() {
            if f.len() != height * width * channels {
                return Err(Error::Shape(format!("frame {i} has {} values", f.len())));
            }
            data.extend_from_slice(f);
        }
        Self::from_vec(frames.len(), height, width, channels, data)
    }

    #[inline]
    pub fn frame_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    #[inline]
    pub fn frame(&self, t: usize) -> &[S] {
        let n = self.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    #[inline]
    pub fn frame_mut(&mut self, t: usize) -> &mut [S] {
        let n = self.frame_len();
        &mut self.data[t * n..(t + 1) * n]
    }

    #[inline]
    pub fn dims(&self) -> [usize; 4] {
        [self.frames, self.height, self.width, self.channels]
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(S) -> U) -> VideoTensor<U> {
        VideoTensor {
            frames: self.frames,
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
            frame_rate: self.frame_rate,
        }
    }

    pub fn cast<U: Scalar>(&self) -> VideoTensor<U> {
        self.map(|v| U::lit(v.as_f64()))
    }
}
