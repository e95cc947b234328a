//! Associative adversarial training on MNIST with per-epoch checkpoints,
//! sample grids and optional metrics.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use boltzgan::adversarial::{generate, load_checkpoint, save_checkpoint, traces_csv, train_epoch, GanConfig, GanState};
use boltzgan::dataset::{load_mnist, ImageSet};
use boltzgan::evaluation::{fid, inception_score, train_inception, InceptionConfig, InceptionModel};
use boltzgan::graph::Topology;
use boltzgan::ising::DEFAULT_ENUMERATION_CAP;
use boltzgan::neural::{Activation, AdamConfig};
use boltzgan::rng::stream;
use boltzgan::sampler::{build_sampler, GibbsConfig, SampleOrigin, Sampler};
use ndarray::s;

use crate::config::RunConfig;
use crate::output::{image_grid_pgm, sha256_hex, write_file, write_manifest, LOCATION_KEYS};

pub const DEFAULTS: &[(&str, &str)] = &[
    ("seed", "0"),
    ("out", "runs/gan"),
    ("data", "data/mnist"),
    ("inception", "runs/inception"),
    ("epochs", "50"),
    ("batch_size", "100"),
    ("pool_size", "300"),
    ("latent_nodes", "100"),
    ("topology", "chimera"),
    ("sampler", "gibbs"),
    ("alpha", "4"),
    ("lr", "0.0002"),
    ("beta1", "0.5"),
    ("beta2", "0.999"),
    ("latent_rate", "0.0002"),
    ("label_smoothing", "0.1"),
    ("discriminator_hidden", "512,256,128"),
    ("discriminator_dropout", "0.3"),
    ("generator_hidden", "256,512"),
    ("generator_activation", "leaky_relu"),
    ("generator_average", "0.999"),
    ("gibbs_burn_in", "100"),
    ("gibbs_thinning", "2"),
    ("gibbs_chains", "32"),
    ("beta", "1"),
    ("train_images", "60000"),
    ("eval_every", "0"),
    ("eval_images", "10000"),
    ("resume", "false"),
];

/// Keys that may change between a checkpoint and its resumption.
const RESUMABLE_KEYS: &[&str] = &["epochs", "resume", "eval_every", "eval_images", "inception"];

pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const METRICS_HEADER: &str = "run_id,epoch,inception_score,fid,classifier_accuracy\n";

fn widths(config: &RunConfig, key: &str) -> Result<Vec<usize>> {
    config
        .get_list(key)?
        .iter()
        .map(|w| w.parse::<usize>().with_context(|| format!("{key}: bad width {w:?}")))
        .collect()
}

pub fn gibbs_config(config: &RunConfig) -> Result<GibbsConfig<f64>> {
    Ok(GibbsConfig::new(
        config.get("gibbs_burn_in")?,
        config.get("gibbs_thinning")?,
        config.get("gibbs_chains")?,
        config.get("beta")?,
    ))
}

pub fn gan_config(config: &RunConfig) -> Result<GanConfig> {
    let gan = GanConfig {
        epochs: config.get("epochs")?,
        batch_size: config.get("batch_size")?,
        pool_size: config.get("pool_size")?,
        latent_nodes: config.get("latent_nodes")?,
        topology: Topology::parse(config.get_str("topology")?)?,
        sampler: SampleOrigin::parse_sampler(config.get_str("sampler")?)?,
        gibbs: gibbs_config(config)?,
        alpha: config.get("alpha")?,
        adam: AdamConfig { rate: config.get("lr")?, beta1: config.get("beta1")?, beta2: config.get("beta2")?, ..AdamConfig::default() },
        latent_rate: config.get("latent_rate")?,
        label_smoothing: config.get("label_smoothing")?,
        discriminator_hidden: widths(config, "discriminator_hidden")?,
        discriminator_dropout: config.get("discriminator_dropout")?,
        generator_hidden: widths(config, "generator_hidden")?,
        generator_activation: config.get::<Activation>("generator_activation")?,
        generator_average: config.get("generator_average")?,
        seed: config.get("seed")?,
    };
    gan.validate()?;
    if gan.sampler == SampleOrigin::Exact && gan.latent_nodes > DEFAULT_ENUMERATION_CAP {
        bail!(
            "sampler=exact enumerates all states and is limited to {DEFAULT_ENUMERATION_CAP} latent nodes, got {}",
            gan.latent_nodes
        );
    }
    Ok(gan)
}

/// Latent sampler for a model on `state`'s graph; the surrogate's embedding
/// is drawn from a stream fixed by the seed so resumed runs reuse it.
pub fn latent_sampler<T: boltzgan::Real>(state: &GanState<T>, gan: &GanConfig) -> Result<Box<dyn Sampler<f64>>> {
    let mut rng = stream(gan.seed, "latent-embedding", 0);
    Ok(build_sampler(gan.sampler, state.latent_model.graph(), &gan.gibbs, DEFAULT_ENUMERATION_CAP, &mut rng)?)
}

/// Loads the classifier from `dir`, or trains and saves it there.
pub fn inception_model(dir: &Path, train: &ImageSet, test: &ImageSet, seed: u64) -> Result<InceptionModel> {
    if dir.join("classifier.bin").exists() {
        return InceptionModel::load(dir).with_context(|| format!("loading classifier from {}", dir.display()));
    }
    log::info!("training the evaluation classifier into {}", dir.display());
    let model = train_inception(train, test, &InceptionConfig { seed, ..InceptionConfig::default() })?;
    model.save(dir)?;
    log::info!("classifier test accuracy {:.4}", model.test_accuracy);
    Ok(model)
}

/// IS and FID of `count` generated images against the first `count` test
/// images. Sampling uses a stream keyed by the seed and epoch.
pub fn evaluate_state(
    state: &GanState<f64>,
    gan: &GanConfig,
    sampler: &mut dyn Sampler<f64>,
    classifier: &InceptionModel,
    test: &ImageSet,
    count: usize,
) -> Result<(f64, f64)> {
    let mut rng = stream(gan.seed, "evaluation", state.epoch as u64);
    let generated = generate(state, count, gan.alpha, sampler, &mut rng)?;
    let real = test.to_signed()?;
    let real = real.pixels().slice(s![..count.min(real.len()), ..]).to_owned();
    let is = inception_score(classifier, generated.view(), 1)?;
    let distance = fid(classifier, real.view(), generated.view())?;
    Ok((is, distance))
}

pub fn metrics_row(run_id: &str, epoch: usize, is: f64, fid: f64, accuracy: f64) -> String {
    format!("{run_id},{epoch},{is:e},{fid:e},{accuracy:e}\n")
}

fn checkpoint_hash(config: &RunConfig) -> String {
    let mut skip = RESUMABLE_KEYS.to_vec();
    skip.extend(LOCATION_KEYS);
    sha256_hex(&config.snapshot_without(&skip))
}

fn write_checkpoint(state: &GanState<f64>, out: &Path, config: &RunConfig, seed: u64) -> Result<()> {
    let dir = out.join(CHECKPOINT_DIR);
    let staging = out.join(format!("{CHECKPOINT_DIR}.partial"));
    if staging.exists() {
        fs::remove_dir_all(&staging).with_context(|| format!("clearing {}", staging.display()))?;
    }
    save_checkpoint(state, &staging)?;
    let manifest = format!("epoch={}\nseed={seed}\nconfig_sha256={}\n", state.epoch, checkpoint_hash(config));
    write_file(&staging.join("manifest.txt"), manifest.as_bytes())?;
    if dir.exists() {
        fs::remove_dir_all(&dir).with_context(|| format!("replacing {}", dir.display()))?;
    }
    fs::rename(&staging, &dir).with_context(|| format!("moving checkpoint into {}", dir.display()))
}

fn read_checkpoint(out: &Path, config: &RunConfig) -> Result<GanState<f64>> {
    let dir = out.join(CHECKPOINT_DIR);
    let manifest = fs::read_to_string(dir.join("manifest.txt"))
        .with_context(|| format!("no checkpoint to resume in {}", dir.display()))?;
    let want = format!("config_sha256={}", checkpoint_hash(config));
    if !manifest.lines().any(|l| l == want) {
        bail!("checkpoint in {} was written with a different configuration", dir.display());
    }
    Ok(load_checkpoint(&dir)?)
}

pub struct GanRun {
    pub run_id: String,
    pub state: GanState<f64>,
    pub out: PathBuf,
}

pub fn run(config: &RunConfig) -> Result<GanRun> {
    let gan = gan_config(config)?;
    let out = config.get_path("out")?;
    let (train_set, test_set) = load_mnist(config.get_path("data")?).context("loading MNIST")?;
    let n_train: usize = config.get("train_images")?;
    let images = train_set.head(n_train.min(train_set.len())).to_signed()?;
    let eval_every: usize = config.get("eval_every")?;
    let eval_images: usize = config.get("eval_images")?;

    fs::create_dir_all(&out).with_context(|| format!("creating output directory {}", out.display()))?;
    let mut state = if config.get_bool("resume")? {
        let state = read_checkpoint(&out, config)?;
        log::info!("resuming after epoch {}", state.epoch);
        state
    } else {
        GanState::new(&gan, images.n_pixels())?
    };
    state.check(&gan)?;
    let run_id = write_manifest(&out, "train-gan", config)?;
    let mut sampler = latent_sampler(&state, &gan)?;
    let classifier = if eval_every > 0 {
        Some(inception_model(&config.get_path("inception")?, &train_set, &test_set, gan.seed)?)
    } else {
        None
    };
    let metrics_path = out.join("metrics.csv");
    let mut metrics = match fs::read_to_string(&metrics_path) {
        Ok(text) if state.epoch > 0 => keep_rows_up_to(&text, state.epoch),
        _ => METRICS_HEADER.to_string(),
    };

    while state.epoch < gan.epochs {
        let stats = train_epoch(&mut state, images.pixels(), &gan, sampler.as_mut())?;
        log::info!(
            "epoch {}: D loss {:.4}, G loss {:.4}, latent L1 {:.3}",
            stats.epoch,
            stats.discriminator_loss,
            stats.generator_loss,
            stats.latent_l1
        );
        write_checkpoint(&state, &out, config, gan.seed)?;
        write_file(&out.join("traces.csv"), traces_csv(&state.traces).as_bytes())?;
        let mut rng = stream(gan.seed, "grid", state.epoch as u64);
        let grid = generate(&state, 64, gan.alpha, sampler.as_mut(), &mut rng)?;
        let pgm = image_grid_pgm(grid.view(), images.height(), images.width(), 8, 8)?;
        write_file(&out.join("samples").join(format!("epoch_{:03}.pgm", state.epoch)), &pgm)?;
        if let Some(classifier) = &classifier {
            if state.epoch % eval_every == 0 || state.epoch == gan.epochs {
                let (is, distance) = evaluate_state(&state, &gan, sampler.as_mut(), classifier, &test_set, eval_images)?;
                log::info!("epoch {}: IS {is:.3}, FID {distance:.2}", state.epoch);
                metrics.push_str(&metrics_row(&run_id, state.epoch, is, distance, classifier.test_accuracy));
                write_file(&metrics_path, metrics.as_bytes())?;
            }
        }
    }
    write_file(&out.join("latent_model.txt"), state.latent_model.to_text().as_bytes())?;
    Ok(GanRun { run_id, state, out })
}

/// Metrics rows for epochs up to `epoch`, so a resumed run does not repeat
/// rows written after the checkpoint it resumes from.
fn keep_rows_up_to(text: &str, epoch: usize) -> String {
    let mut out = METRICS_HEADER.to_string();
    for line in text.lines().skip(1) {
        let keep = line.split(',').nth(1).and_then(|e| e.parse::<usize>().ok()).is_some_and(|e| e <= epoch);
        if keep {
            let _ = writeln!(out, "{line}");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn defaults() -> RunConfig {
        RunConfig::from_defaults(DEFAULTS)
    }

    #[test]
    fn defaults_parse() {
        let gan = gan_config(&defaults()).unwrap();
        assert_eq!(gan.discriminator_hidden, vec![512, 256, 128]);
        assert_eq!(gan.latent_nodes, 100);
        assert_eq!(gan.topology, Topology::Chimera);
        assert_eq!(gan.adam.rate, 2e-4);
    }

    #[test]
    fn exact_sampler_needs_small_latent_space() {
        let mut c = defaults();
        c.set("sampler", "exact").unwrap();
        let err = gan_config(&c).unwrap_err().to_string();
        assert!(err.contains("enumeration") || err.contains("limited"), "{err}");
        c.set("latent_nodes", "12").unwrap();
        c.set("discriminator_hidden", "32").unwrap();
        assert!(gan_config(&c).is_ok());
    }

    #[test]
    fn pool_must_cover_three_batches() {
        let mut c = defaults();
        c.set("pool_size", "299").unwrap();
        assert!(gan_config(&c).is_err());
    }

    #[test]
    fn resumed_metrics_drop_later_rows() {
        let text = format!("{METRICS_HEADER}a,1,1,2,3\na,2,1,2,3\na,3,1,2,3\n");
        assert_eq!(keep_rows_up_to(&text, 2), format!("{METRICS_HEADER}a,1,1,2,3\na,2,1,2,3\n"));
    }

    #[test]
    fn checkpoint_hash_ignores_resumable_keys() {
        let a = defaults();
        let mut b = defaults();
        b.set("epochs", "80").unwrap();
        b.set("resume", "true").unwrap();
        b.set("out", "elsewhere").unwrap();
        assert_eq!(checkpoint_hash(&a), checkpoint_hash(&b));
        b.set("lr", "0.001").unwrap();
        assert_ne!(checkpoint_hash(&a), checkpoint_hash(&b));
    }
}
