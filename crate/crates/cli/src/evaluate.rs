//! Inception score and FID for saved generator checkpoints.

use std::fmt::Write as _;

use anyhow::{bail, Context, Result};
use boltzgan::adversarial::{load_checkpoint, GanConfig, GanState};
use boltzgan::dataset::load_mnist;
use boltzgan::sampler::SampleOrigin;

use crate::config::RunConfig;
use crate::gan::{evaluate_state, gibbs_config, inception_model, latent_sampler};
use crate::output::{write_file, write_manifest};

pub const DEFAULTS: &[(&str, &str)] = &[
    ("seed", "0"),
    ("out", "runs/evaluate"),
    ("data", "data/mnist"),
    ("inception", "runs/inception"),
    ("checkpoints", "runs/gan/checkpoint"),
    ("eval_images", "10000"),
    ("sampler", "gibbs"),
    ("alpha", "4"),
    ("gibbs_burn_in", "100"),
    ("gibbs_thinning", "2"),
    ("gibbs_chains", "32"),
    ("beta", "1"),
];

pub const METRICS_HEADER: &str = "run_id,checkpoint,epoch,inception_score,fid,classifier_accuracy\n";

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub checkpoint: String,
    pub epoch: usize,
    pub inception_score: f64,
    pub fid: f64,
}

/// Scores every checkpoint in the comma-separated `checkpoints` list and
/// writes one `metrics.csv` row for each.
pub fn run(config: &RunConfig) -> Result<Vec<Evaluation>> {
    let checkpoints = config.get_list("checkpoints")?;
    if checkpoints.is_empty() {
        bail!("no checkpoints given");
    }
    let gan = GanConfig {
        seed: config.get("seed")?,
        sampler: SampleOrigin::parse_sampler(config.get_str("sampler")?)?,
        gibbs: gibbs_config(config)?,
        alpha: config.get("alpha")?,
        ..GanConfig::default()
    };
    gan.gibbs.validate()?;
    let eval_images: usize = config.get("eval_images")?;
    let states = checkpoints
        .iter()
        .map(|c| load_checkpoint::<f64>(std::path::Path::new(c)).with_context(|| format!("loading checkpoint {c}")))
        .collect::<Result<Vec<GanState<f64>>>>()?;

    let out = config.get_path("out")?;
    let run_id = write_manifest(&out, "evaluate", config)?;
    let (train_set, test_set) = load_mnist(config.get_path("data")?).context("loading MNIST")?;
    let classifier = inception_model(&config.get_path("inception")?, &train_set, &test_set, gan.seed)?;

    let mut csv = METRICS_HEADER.to_string();
    let mut results = Vec::with_capacity(states.len());
    for (path, state) in checkpoints.iter().zip(&states) {
        let mut sampler = latent_sampler(state, &gan)?;
        let (is, fid) = evaluate_state(state, &gan, sampler.as_mut(), &classifier, &test_set, eval_images)?;
        log::info!("{path} (epoch {}): IS {is:.3}, FID {fid:.2}", state.epoch);
        let _ = writeln!(csv, "{run_id},{path},{},{is:e},{fid:e},{:e}", state.epoch, classifier.test_accuracy);
        results.push(Evaluation { checkpoint: path.clone(), epoch: state.epoch, inception_score: is, fid });
    }
    write_file(&out.join("metrics.csv"), csv.as_bytes())?;
    Ok(results)
}
