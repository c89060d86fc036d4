use std::fmt;

use thiserror::Error;

/// Pipeline stage that produced an error.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Scene,
    Trajectory,
    Render,
    Refine,
    Fit,
    Evaluate,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Scene => "scene",
            Stage::Trajectory => "trajectory",
            Stage::Render => "render",
            Stage::Refine => "refine",
            Stage::Fit => "fit",
            Stage::Evaluate => "evaluate",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{stage} stage: {source}")]
    Core {
        stage: Stage,
        #[source]
        source: splatfix_core::Error,
    },
    #[error("{stage} stage: {source}")]
    Refiner {
        stage: Stage,
        #[source]
        source: splatfix_refiner::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Core { stage, .. } | Error::Refiner { stage, .. } => Some(*stage),
            Error::Config(_) => None,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Tags a stage onto lower-level errors.
pub trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T>;
}

impl<T> StageExt<T> for std::result::Result<T, splatfix_core::Error> {
    fn stage(self, stage: Stage) -> Result<T> {
        self.map_err(|source| Error::Core { stage, source })
    }
}

impl<T> StageExt<T> for std::result::Result<T, splatfix_refiner::Error> {
    fn stage(self, stage: Stage) -> Result<T> {
        self.map_err(|source| Error::Refiner { stage, source })
    }
}
