//! Toy flow-matching video refiner conditioned on GP-Buffer videos through geometry adapter
//! blocks.

pub mod autodiff;
pub mod checkpoint;
pub mod error;
pub mod flow;
pub mod latent;
pub mod layers;
pub mod mat;
pub mod model;
pub mod params;

pub use error::{Error, Result};
pub use flow::{generate, refine_video, train, TrainConfig, TrainReport};
pub use latent::{decode, encode, encode_gpbuffer, LatentGeom, LatentVideo, Normalization};
pub use mat::{Mat, Real};
pub use model::{Dims, ModelConfig, RefinerModel};

pub type RefinerModelF32 = RefinerModel<f32>;
pub type RefinerModelF64 = RefinerModel<f64>;
pub type LatentVideoF32 = LatentVideo<f32>;
pub type LatentVideoF64 = LatentVideo<f64>;
