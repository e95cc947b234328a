use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use boltzgan_cli::Command;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "boltzgan", version, about = "Boltzmann-machine latent priors for adversarial networks")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Train Boltzmann machines on 6x6 binarized MNIST for each latent topology.
    CompareTopologies(Common),
    /// Train the associative adversarial network on MNIST.
    TrainGan(Common),
    /// Score saved generator checkpoints with IS and FID.
    Evaluate(Common),
}

#[derive(Args)]
struct Common {
    /// key=value config file applied over the defaults
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// exact, gibbs or surrogate
    #[arg(long)]
    sampler: Option<String>,
    /// complete, bipartite or chimera
    #[arg(long)]
    topology: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// MNIST directory holding the four IDX files
    #[arg(long)]
    data: Option<PathBuf>,
    /// continue from the checkpoint in the output directory
    #[arg(long)]
    resume: bool,
    /// any other config key, repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn overrides(&self) -> Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k.to_string(), v));
            }
        };
        put("seed", self.seed.map(|v| v.to_string()));
        put("out", self.out.as_ref().map(|p| p.display().to_string()));
        put("sampler", self.sampler.clone());
        put("topology", self.topology.clone());
        put("epochs", self.epochs.map(|v| v.to_string()));
        put("lr", self.lr.map(|v| v.to_string()));
        put("data", self.data.as_ref().map(|p| p.display().to_string()));
        if self.resume {
            put("resume", Some("true".into()));
        }
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| anyhow!("--set expects KEY=VALUE, got {kv:?}"))?;
            out.push((k.trim().to_string(), v.to_string()));
        }
        Ok(out)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (command, common) = match &cli.command {
        Sub::CompareTopologies(c) => (Command::CompareTopologies, c),
        Sub::TrainGan(c) => (Command::TrainGan, c),
        Sub::Evaluate(c) => (Command::Evaluate, c),
    };
    let result = common.overrides().and_then(|o| command.config(common.config.as_deref(), &o)).and_then(|c| command.run(&c));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
