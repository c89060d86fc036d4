//! Refine-and-reoptimize pipeline over Gaussian splat scenes, with evaluation and the
//! `splatfix` command line.

pub mod cli;
pub mod desk;
pub mod error;
pub mod eval;
pub mod refine;
pub mod update;

pub use desk::{
    desk_scene, desk_split, fit_experiment, DeskConfig, DeskScene, FitExperiment,
    FitExperimentOutcome,
};
pub use error::{Error, Result, Stage};
pub use eval::{evaluate, EvalReport, ViewScore};
pub use refine::{ModelRefiner, OracleRefiner, Refiner};
pub use update::{reconstruct_update, UpdateConfig, UpdateOutcome};

pub type DeskSceneF32 = DeskScene<f32>;
pub type DeskSceneF64 = DeskScene<f64>;
pub type UpdateOutcomeF32 = UpdateOutcome<f32>;
pub type UpdateOutcomeF64 = UpdateOutcome<f64>;
