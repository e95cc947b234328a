//! Experiment commands behind the `boltzgan` binary.

pub mod compare;
pub mod config;
pub mod evaluate;
pub mod gan;
pub mod output;

use std::path::Path;

use anyhow::Result;

use config::RunConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    CompareTopologies,
    TrainGan,
    Evaluate,
}

impl Command {
    pub fn defaults(self) -> &'static [(&'static str, &'static str)] {
        match self {
            Command::CompareTopologies => compare::DEFAULTS,
            Command::TrainGan => gan::DEFAULTS,
            Command::Evaluate => evaluate::DEFAULTS,
        }
    }

    /// Defaults, then the optional config file, then `overrides` in order.
    pub fn config(self, file: Option<&Path>, overrides: &[(String, String)]) -> Result<RunConfig> {
        let mut config = RunConfig::from_defaults(self.defaults());
        if let Some(path) = file {
            config.merge_file(path)?;
        }
        for (k, v) in overrides {
            config.set(k, v)?;
        }
        Ok(config)
    }

    pub fn run(self, config: &RunConfig) -> Result<()> {
        match self {
            Command::CompareTopologies => compare::run(config).map(|_| ()),
            Command::TrainGan => gan::run(config).map(|_| ()),
            Command::Evaluate => evaluate::run(config).map(|_| ()),
        }
    }
}
