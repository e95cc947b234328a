//! Boltzmann-machine convergence across latent topologies and samplers on
//! reduced, binarized MNIST.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use boltzgan::dataset::{load_mnist, reduce, stochastic_binarize, ImageSet};
use boltzgan::graph::Topology;
use boltzgan::ising::{IsingModel, DEFAULT_ENUMERATION_CAP};
use boltzgan::rng::stream;
use boltzgan::sampler::{build_sampler, GibbsConfig, SampleOrigin};
use boltzgan::trainer::{train, TrainConfig};

use crate::config::RunConfig;
use crate::output::{write_file, write_manifest};

pub const DEFAULTS: &[(&str, &str)] = &[
    ("seed", "0"),
    ("out", "runs/compare"),
    ("data", "data/mnist"),
    ("sampler", "gibbs"),
    ("topology", "complete,bipartite,chimera"),
    // `auto` picks 0.001 for gibbs and exact, 0.03 for the surrogate
    ("lr", "auto"),
    ("epochs", "1000"),
    ("seeds", "5"),
    ("image_size", "6"),
    ("train_images", "60000"),
    ("samples_per_step", "2000"),
    ("gibbs_burn_in", "100"),
    ("gibbs_thinning", "1"),
    ("gibbs_chains", "50"),
    ("beta", "1"),
];

/// Learning rate used when `lr=auto`.
pub fn default_rate(sampler: SampleOrigin) -> f64 {
    match sampler {
        SampleOrigin::AnnealerSurrogate => 0.03,
        _ => 0.001,
    }
}

/// Per-epoch L1 statistics over seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvePoint {
    pub sampler: SampleOrigin,
    pub topology: Topology,
    pub epoch: usize,
    pub l1_mean: f64,
    /// Unbiased variance across seeds (zero for a single seed).
    pub l1_variance: f64,
    pub n_seeds: usize,
}

pub fn curves_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("sampler,topology,epoch,l1_mean,l1_variance,n_seeds\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{:e},{:e},{}",
            p.sampler.name(),
            p.topology.name(),
            p.epoch,
            p.l1_mean,
            p.l1_variance,
            p.n_seeds
        );
    }
    out
}

fn mean_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var)
}

fn reduced_training_set(config: &RunConfig) -> Result<ImageSet> {
    let (train_set, _) = load_mnist(config.get_path("data")?)?;
    let n: usize = config.get("train_images")?;
    let side: usize = config.get("image_size")?;
    Ok(reduce(&train_set.head(n.min(train_set.len())), side, side)?)
}

/// Trains every sampler × topology × seed combination and writes
/// `compare.csv`, the final models and a manifest into `out`.
pub fn run(config: &RunConfig) -> Result<Vec<CurvePoint>> {
    let out = config.get_path("out")?;
    let seed: u64 = config.get("seed")?;
    let seeds: usize = config.get("seeds")?;
    let epochs: usize = config.get("epochs")?;
    let samples: usize = config.get("samples_per_step")?;
    if seeds == 0 {
        bail!("seeds must be at least 1");
    }
    let samplers = config
        .get_list("sampler")?
        .iter()
        .map(|s| SampleOrigin::parse_sampler(s))
        .collect::<boltzgan::Result<Vec<_>>>()?;
    let topologies = config.get_list("topology")?.iter().map(|s| Topology::parse(s)).collect::<boltzgan::Result<Vec<_>>>()?;
    let gibbs = GibbsConfig::new(
        config.get("gibbs_burn_in")?,
        config.get("gibbs_thinning")?,
        config.get("gibbs_chains")?,
        config.get::<f64>("beta")?,
    );
    gibbs.validate()?;
    let reduced = reduced_training_set(config).context("loading the training images")?;
    let run_id = write_manifest(&out, "compare-topologies", config)?;
    log::info!("run {run_id}: {} images of {}x{}", reduced.len(), reduced.height(), reduced.width());

    // one binarization per seed, shared by every sampler and topology
    let data = (0..seeds)
        .map(|k| stochastic_binarize(&reduced, &mut stream(seed, "binarize", k as u64))?.to_samples())
        .collect::<boltzgan::Result<Vec<_>>>()?;
    let n = reduced.n_pixels();
    let mut points = Vec::new();
    for &sampler_kind in &samplers {
        let rate = match config.get_str("lr")? {
            "auto" => default_rate(sampler_kind),
            _ => config.get("lr")?,
        };
        for &topology in &topologies {
            let graph = topology.build(n)?;
            let mut curves = Vec::with_capacity(seeds);
            for (k, set) in data.iter().enumerate() {
                let label = format!("{}-{}", sampler_kind.name(), topology.name());
                let mut sampler =
                    build_sampler(sampler_kind, &graph, &gibbs, DEFAULT_ENUMERATION_CAP, &mut stream(seed, &format!("embed-{label}"), k as u64))?;
                let train_config = TrainConfig { kl_cap: 0, ..TrainConfig::new(rate, epochs, samples, sampler_kind) };
                let mut rng = stream(seed, &format!("train-{label}"), k as u64);
                let (model, trace) = train(&IsingModel::zeros(graph.clone()), set, &train_config, sampler.as_mut(), seed, &mut rng)?;
                log::info!("{label} seed {k}: final L1 {:.3}", trace.final_l1().unwrap_or(f64::NAN));
                save_model(&out, &label, k, &model)?;
                curves.push(trace.records.iter().map(|r| r.l1_norm).collect::<Vec<_>>());
            }
            for e in 0..epochs {
                let values: Vec<f64> = curves.iter().map(|c| c[e]).collect();
                let (l1_mean, l1_variance) = mean_variance(&values);
                points.push(CurvePoint { sampler: sampler_kind, topology, epoch: e + 1, l1_mean, l1_variance, n_seeds: seeds });
            }
        }
    }
    write_file(&out.join("compare.csv"), curves_csv(&points).as_bytes())?;
    Ok(points)
}

fn save_model(out: &Path, label: &str, k: usize, model: &IsingModel<f64>) -> Result<()> {
    write_file(&out.join("models").join(format!("{label}-seed{k}.txt")), model.to_text().as_bytes())
}
