#![allow(dead_code)]

use rand::Rng;
use splatfix_core::rng::stream_rng;
use splatfix_core::{GpBufferVideo, VideoTensor};
use splatfix_refiner::{Dims, ModelConfig, RefinerModel};

pub fn random_video(
    frames: usize,
    h: usize,
    w: usize,
    c: usize,
    lo: f64,
    hi: f64,
    seed: u64,
) -> VideoTensor<f64> {
    let mut rng = stream_rng(seed, 99);
    let data = (0..frames * h * w * c)
        .map(|_| rng.random_range(lo..hi))
        .collect();
    VideoTensor::from_vec(frames, h, w, c, data).unwrap()
}

pub fn random_buffers(frames: usize, h: usize, w: usize, seed: u64) -> GpBufferVideo<f64> {
    GpBufferVideo::from_modalities([
        random_video(frames, h, w, 3, 0.0, 1.0, seed),
        random_video(frames, h, w, 1, 0.0, 1.0, seed + 1),
        random_video(frames, h, w, 1, 1.0, 8.0, seed + 2),
        random_video(frames, h, w, 3, -1.0, 1.0, seed + 3),
        random_video(frames, h, w, 3, 0.0, 2.0, seed + 4),
    ])
    .unwrap()
}

pub const TINY: Dims = Dims {
    d: 16,
    heads: 2,
    blocks: 2,
};

/// 4 frames of 16×16: a 1×2×2 token grid.
pub fn tiny_model<T: splatfix_refiner::Real>(seed: u64) -> RefinerModel<T> {
    RefinerModel::new(ModelConfig::new(TINY, 4, 16, 16, seed).unwrap()).unwrap()
}
