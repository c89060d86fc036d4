//! Gaussian splatting core: scene representation, GP-Buffer rasterization, differentiable
//! fitting, camera trajectories and synthetic artifact simulation.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); aliases for both precisions are
//! exported at the crate root.

pub mod camera;
pub mod cloud;
pub mod error;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod optim;
pub mod raster;
pub mod rng;
pub mod scalar;
pub mod sh;
pub mod simulate;
pub mod traject;
pub mod video;

pub use camera::{look_rotation, Camera};
pub use cloud::GaussianCloud;
pub use error::{Error, Result};
pub use linalg::{Mat3, Se3, Vec3};
pub use raster::{GpBuffer, GpBufferVideo, ProjectedSplat, RasterConfig};
pub use scalar::Scalar;
pub use video::VideoTensor;

pub type GaussianCloud32 = GaussianCloud<f32>;
pub type GaussianCloud64 = GaussianCloud<f64>;
pub type Camera32 = Camera<f32>;
pub type Camera64 = Camera<f64>;
pub type GpBuffer32 = GpBuffer<f32>;
pub type GpBuffer64 = GpBuffer<f64>;
pub type Video32 = VideoTensor<f32>;
pub type Video64 = VideoTensor<f64>;
