//! Associative adversarial training.
//!
//! One [`train_step`] draws a single pool of latent spins and uses disjoint
//! thirds of it for the discriminator update, the Boltzmann-machine model
//! moments and the generator update. The machine's data moments come from
//! the binarized feature layer of the discriminator on real images, so the
//! generator prior tracks what the discriminator sees in real data.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;

use crate::graph::Topology;
use crate::ising::{IsingModel, Moments};
use crate::neural::{
    binarize_features, load_adam, load_network, loss, save_adam, save_network, Activation, AdamConfig, AdamState,
    Gradients, Network, OutputGrad,
};
use crate::reparam::{reparametrize, ReparamConfig, DEFAULT_ALPHA};
use crate::rng::{stream, SeededRng};
use crate::sampler::{GibbsConfig, SampleOrigin, SampleSet, Sampler};
use crate::trainer::{gradient_step, l1_norm};
use crate::{Error, Real, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GanConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Latent samples drawn per step; at least three batches.
    pub pool_size: usize,
    pub latent_nodes: usize,
    pub topology: Topology,
    pub sampler: SampleOrigin,
    pub gibbs: GibbsConfig<f64>,
    pub alpha: f64,
    pub adam: AdamConfig,
    /// Rate of the Boltzmann-machine moment-matching step.
    pub latent_rate: f64,
    /// Real images are labelled `1 - label_smoothing`.
    pub label_smoothing: f64,
    /// Hidden widths of the discriminator before the feature layer.
    pub discriminator_hidden: Vec<usize>,
    /// Dropout rate on those hidden layers during both network updates.
    pub discriminator_dropout: f64,
    pub generator_hidden: Vec<usize>,
    /// Activation of the generator's hidden layers.
    pub generator_activation: Activation,
    /// Decay of the running average of generator weights used by
    /// [`generate`]; 0 keeps it equal to the trained generator.
    pub generator_average: f64,
    pub seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 100,
            pool_size: 300,
            latent_nodes: 100,
            topology: Topology::Chimera,
            sampler: SampleOrigin::Gibbs,
            gibbs: GibbsConfig::default(),
            alpha: DEFAULT_ALPHA,
            adam: AdamConfig::default(),
            latent_rate: 2e-4,
            label_smoothing: 0.1,
            discriminator_hidden: vec![512, 256, 128],
            discriminator_dropout: 0.3,
            generator_hidden: vec![256, 512],
            generator_activation: Activation::LeakyRelu,
            generator_average: 0.999,
            seed: 0,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.latent_nodes == 0 {
            return Err(Error::Config("batch size and latent nodes must be positive".into()));
        }
        if self.pool_size < 3 * self.batch_size {
            return Err(Error::Config(format!(
                "sample pool of {} cannot supply three disjoint batches of {}",
                self.pool_size, self.batch_size
            )));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::Config(format!("label smoothing {} outside [0, 1)", self.label_smoothing)));
        }
        if !(self.latent_rate.is_finite() && self.latent_rate >= 0.0) {
            return Err(Error::Config(format!("latent rate {} must be finite and non-negative", self.latent_rate)));
        }
        if !(0.0..1.0).contains(&self.discriminator_dropout) {
            return Err(Error::Config(format!("dropout rate {} outside [0, 1)", self.discriminator_dropout)));
        }
        if !(0.0..1.0).contains(&self.generator_average) {
            return Err(Error::Config(format!("generator average decay {} outside [0, 1)", self.generator_average)));
        }
        if self.sampler == SampleOrigin::Data {
            return Err(Error::Config("data is not a sampler".into()));
        }
        ReparamConfig::new(self.alpha)?;
        self.adam.validate()?;
        self.gibbs.validate()
    }

    /// Index of the feature layer as counted by
    /// [`Forward::layer`](crate::neural::Forward::layer).
    pub fn feature_layer(&self) -> usize {
        self.discriminator_hidden.len() + 1
    }

    /// Per-layer dropout rates of the discriminator.
    pub fn dropout_rates(&self) -> Vec<f64> {
        let mut rates = vec![self.discriminator_dropout; self.discriminator_hidden.len()];
        rates.extend([0.0, 0.0]);
        rates
    }
}

/// Averages over the steps of one epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub steps: usize,
    pub discriminator_loss: f64,
    pub generator_loss: f64,
    /// L1 distance between feature and latent-model correlations over the
    /// latent graph's edges.
    pub latent_l1: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepStats {
    pub discriminator_loss: f64,
    pub generator_loss: f64,
    pub latent_l1: f64,
}

#[derive(Clone, Debug)]
pub struct GanState<T> {
    pub generator: Network<T>,
    /// Exponential running average of the generator weights, the network
    /// that [`generate`] samples from.
    pub generator_average: Network<T>,
    pub discriminator: Network<T>,
    pub generator_adam: AdamState<T>,
    pub discriminator_adam: AdamState<T>,
    pub latent_model: IsingModel<f64>,
    /// Completed epochs.
    pub epoch: usize,
    pub traces: Vec<EpochStats>,
}

impl<T: Real> PartialEq for GanState<T> {
    fn eq(&self, other: &Self) -> bool {
        self.generator == other.generator
            && self.generator_average == other.generator_average
            && self.discriminator == other.discriminator
            && self.generator_adam == other.generator_adam
            && self.discriminator_adam == other.discriminator_adam
            && self.latent_model == other.latent_model
            && self.epoch == other.epoch
            && self.traces == other.traces
    }
}

impl<T: Real> GanState<T> {
    /// Fresh networks for images of `pixels` values and a zero latent model
    /// on the configured topology.
    pub fn new(config: &GanConfig, pixels: usize) -> Result<Self> {
        config.validate()?;
        let mut rng = stream(config.seed, "gan-init", 0);
        let mut d_widths = vec![pixels];
        d_widths.extend(&config.discriminator_hidden);
        d_widths.extend([config.latent_nodes, 1]);
        let mut d_acts = vec![Activation::LeakyRelu; config.discriminator_hidden.len()];
        d_acts.extend([Activation::Tanh, Activation::Sigmoid]);
        let discriminator = Network::glorot(&d_widths, &d_acts, &mut rng)?;
        let mut g_widths = vec![config.latent_nodes];
        g_widths.extend(&config.generator_hidden);
        g_widths.push(pixels);
        let mut g_acts = vec![config.generator_activation; config.generator_hidden.len()];
        g_acts.push(Activation::Tanh);
        let generator = Network::glorot(&g_widths, &g_acts, &mut rng)?;
        let latent_model = IsingModel::zeros(config.topology.build(config.latent_nodes)?);
        Ok(Self {
            generator_adam: AdamState::new(&generator, config.adam),
            discriminator_adam: AdamState::new(&discriminator, config.adam),
            generator_average: generator.clone(),
            generator,
            discriminator,
            latent_model,
            epoch: 0,
            traces: Vec::new(),
        })
    }

    pub fn check(&self, config: &GanConfig) -> Result<()> {
        let n = self.latent_model.n_nodes();
        let feature = config.feature_layer();
        let ok = n == config.latent_nodes
            && self.generator.input_dim() == n
            && same_shape(&self.generator, &self.generator_average)
            && self.discriminator.n_layers() == feature + 1
            && self.discriminator.layers()[feature - 1].outputs() == n
            && self.discriminator.output_dim() == 1
            && self.generator.output_dim() == self.discriminator.input_dim()
            && self.generator_adam.matches(&self.generator)
            && self.discriminator_adam.matches(&self.discriminator);
        if !ok {
            return Err(Error::InvalidState(format!(
                "networks and latent model disagree: {n} latent nodes, generator input {}, config expects {}",
                self.generator.input_dim(),
                config.latent_nodes
            )));
        }
        Ok(())
    }

    pub fn image_pixels(&self) -> usize {
        self.generator.output_dim()
    }
}

fn same_shape<T: Real>(a: &Network<T>, b: &Network<T>) -> bool {
    a.n_layers() == b.n_layers()
        && a.layers().iter().zip(b.layers()).all(|(x, y)| x.weights.dim() == y.weights.dim() && x.activation == y.activation)
}

/// Moves `average` toward `current` by `1 - decay`.
pub fn update_average<T: Real>(average: &mut Network<T>, current: &Network<T>, decay: f64) {
    let (keep, take) = (T::lit(decay), T::lit(1.0 - decay));
    for (a, c) in average.layers_mut().iter_mut().zip(current.layers()) {
        a.weights.zip_mut_with(&c.weights, |a, &c| *a = keep * *a + take * c);
        a.bias.zip_mut_with(&c.bias, |a, &c| *a = keep * *a + take * c);
    }
}

/// Sum of the mean binary cross-entropies of the real and fake batches.
pub fn discriminator_loss<T: Real>(d_real: ArrayView1<'_, T>, d_fake: ArrayView1<'_, T>, real_label: T) -> Result<T> {
    let real = Array1::from_elem(d_real.len(), real_label);
    let fake = Array1::zeros(d_fake.len());
    Ok(loss::binary_cross_entropy(d_real, real.view())? + loss::binary_cross_entropy(d_fake, fake.view())?)
}

/// Non-saturating generator loss, the mean of `-ln d_fake`.
pub fn generator_loss<T: Real>(d_fake: ArrayView1<'_, T>) -> Result<T> {
    let ones = Array1::from_elem(d_fake.len(), T::one());
    loss::binary_cross_entropy(d_fake, ones.view())
}

/// Disjoint index sets of `n` each for the discriminator, the latent-model
/// moments and the generator, taken from a shuffled pool of `m`.
pub fn partition_pool(m: usize, n: usize, rng: &mut SeededRng) -> Result<[Vec<usize>; 3]> {
    if m < 3 * n {
        return Err(Error::Config(format!("pool of {m} cannot supply three disjoint batches of {n}")));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(rng);
    Ok([order[..n].to_vec(), order[n..2 * n].to_vec(), order[2 * n..3 * n].to_vec()])
}

fn spins_matrix(set: &SampleSet) -> Array2<i8> {
    Array2::from_shape_vec((set.len(), set.n_nodes()), set.as_flat().to_vec()).expect("sample set is rectangular")
}

fn generate_from_spins<T: Real>(generator: &Network<T>, spins: &SampleSet, alpha: f64, rng: &mut SeededRng) -> Result<Array2<T>> {
    let latent = reparametrize(spins_matrix(spins).view(), &ReparamConfig::new(T::lit(alpha))?, rng);
    generator.predict(latent.view())
}

/// Per-layer dropout rates and the stream that draws the masks.
pub type Dropout<'a> = Option<(&'a [f64], &'a mut SeededRng)>;

fn forward_with<T: Real>(net: &Network<T>, x: ArrayView2<'_, T>, dropout: Dropout<'_>) -> Result<crate::neural::Forward<T>> {
    match dropout {
        Some((rates, rng)) => net.forward_dropout(x, rates, rng),
        None => net.forward(x),
    }
}

/// [`discriminator_loss`] on `real` and `fake` rows and its parameter
/// gradients.
pub fn discriminator_gradients<T: Real>(
    discriminator: &Network<T>,
    real: ArrayView2<'_, T>,
    fake: ArrayView2<'_, T>,
    real_label: T,
    dropout: Dropout<'_>,
) -> Result<(T, Gradients<T>)> {
    let (n_real, n_fake) = (real.nrows(), fake.nrows());
    if n_real == 0 || n_fake == 0 {
        return Err(Error::InvalidInput("discriminator needs real and fake rows".into()));
    }
    let mut both = real.to_owned();
    both.append(Axis(0), fake).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let cache = forward_with(discriminator, both.view(), dropout)?;
    let p = cache.output().column(0).to_owned();
    let loss = discriminator_loss(p.slice(s![..n_real]), p.slice(s![n_real..]), real_label)?;
    let (w_real, w_fake) = (T::lit(1.0 / n_real as f64), T::lit(1.0 / n_fake as f64));
    let grad = Array2::from_shape_fn((n_real + n_fake, 1), |(i, _)| {
        if i < n_real {
            (p[i] - real_label) * w_real
        } else {
            p[i] * w_fake
        }
    });
    Ok((loss, discriminator.backward(&cache, OutputGrad::PreActivation(grad))?))
}

/// [`generator_loss`] of the images generated from `latent` and the
/// generator's parameter gradients, back-propagated through the
/// discriminator.
pub fn generator_gradients<T: Real>(
    generator: &Network<T>,
    discriminator: &Network<T>,
    latent: ArrayView2<'_, T>,
    dropout: Dropout<'_>,
) -> Result<(T, Gradients<T>)> {
    let g_cache = generator.forward(latent)?;
    let d_cache = forward_with(discriminator, g_cache.output().view(), dropout)?;
    let q = d_cache.output().column(0).to_owned();
    let loss = generator_loss(q.view())?;
    let inv_n = T::lit(1.0 / q.len() as f64);
    let grad = q.mapv(|v| (v - T::one()) * inv_n).insert_axis(Axis(1));
    let dx = discriminator.input_gradient(&d_cache, OutputGrad::PreActivation(grad))?;
    Ok((loss, generator.backward(&g_cache, OutputGrad::Output(dx))?))
}

/// One pass of the associative loop on the real batch `images` (pixels in
/// `[-1, 1]`): one pool draw, a discriminator step, a latent-model step from
/// the discriminator's binarized features, then a generator step.
pub fn train_step<T: Real>(
    state: &mut GanState<T>,
    images: ArrayView2<'_, T>,
    config: &GanConfig,
    sampler: &mut dyn Sampler<f64>,
    rng: &mut SeededRng,
) -> Result<StepStats> {
    let n = config.batch_size;
    if images.nrows() != n || images.ncols() != state.image_pixels() {
        return Err(Error::InvalidInput(format!(
            "batch is {:?}, expected ({n}, {})",
            images.dim(),
            state.image_pixels()
        )));
    }
    let pool = sampler.sample(&state.latent_model, config.pool_size, rng)?;
    let [for_d, for_latent, for_g] = partition_pool(pool.len(), n, rng)?;

    let fake = generate_from_spins(&state.generator, &pool.select(&for_d), config.alpha, rng)?;
    let real_label = T::lit(1.0 - config.label_smoothing);
    let rates = config.dropout_rates();
    let (d_loss, grads) = discriminator_gradients(&state.discriminator, images, fake.view(), real_label, Some((&rates, &mut *rng)))?;
    state.discriminator_adam.step(&mut state.discriminator, &grads)?;

    // latent model: feature moments of real data against the pool's share
    let features = state.discriminator.forward(images)?;
    let spins = binarize_features(features.layer(config.feature_layer()).view(), T::zero());
    let data = SampleSet::from_flat(spins.ncols(), spins.into_raw_vec_and_offset().0, SampleOrigin::Data)?;
    let edges = state.latent_model.graph().edges().to_vec();
    let data_moments = Moments::from_samples(&data, &edges)?;
    let model_moments = Moments::from_samples(&pool.select(&for_latent), &edges)?;
    let latent_l1 = l1_norm(&data_moments, &model_moments)?;
    state.latent_model = gradient_step(&state.latent_model, &data_moments, &model_moments, config.latent_rate)?;

    let latent = reparametrize(spins_matrix(&pool.select(&for_g)).view(), &ReparamConfig::new(T::lit(config.alpha))?, rng);
    let (g_loss, grads) = generator_gradients(&state.generator, &state.discriminator, latent.view(), Some((&rates, &mut *rng)))?;
    state.generator_adam.step(&mut state.generator, &grads)?;
    update_average(&mut state.generator_average, &state.generator, config.generator_average);

    Ok(StepStats { discriminator_loss: d_loss.as_f64(), generator_loss: g_loss.as_f64(), latent_l1: latent_l1.as_f64() })
}

/// One shuffled pass over `images` in full batches (a trailing partial batch
/// is dropped). Randomness comes from a stream keyed by the seed and the
/// epoch number, so resuming from a checkpoint repeats the same epoch.
pub fn train_epoch<T: Real>(
    state: &mut GanState<T>,
    images: ArrayView2<'_, f64>,
    config: &GanConfig,
    sampler: &mut dyn Sampler<f64>,
) -> Result<EpochStats> {
    state.check(config)?;
    let n = config.batch_size;
    if images.nrows() < n {
        return Err(Error::InvalidInput(format!("{} images cannot fill a batch of {n}", images.nrows())));
    }
    let epoch = state.epoch + 1;
    let mut rng = stream(config.seed, "gan-epoch", epoch as u64);
    let mut order: Vec<usize> = (0..images.nrows()).collect();
    order.shuffle(&mut rng);
    let mut totals = [0.0; 3];
    let mut steps = 0;
    for batch in order.chunks_exact(n) {
        let x = images.select(Axis(0), batch).mapv(T::lit);
        let st = train_step(state, x.view(), config, sampler, &mut rng)?;
        for (t, v) in totals.iter_mut().zip([st.discriminator_loss, st.generator_loss, st.latent_l1]) {
            *t += v;
        }
        steps += 1;
    }
    if !totals.iter().all(|v| v.is_finite()) {
        return Err(Error::TrainingFailure(format!("epoch {epoch} produced non-finite losses {totals:?}")));
    }
    let k = steps as f64;
    let stats = EpochStats {
        epoch,
        steps,
        discriminator_loss: totals[0] / k,
        generator_loss: totals[1] / k,
        latent_l1: totals[2] / k,
    };
    state.epoch = epoch;
    state.traces.push(stats.clone());
    Ok(stats)
}

/// `count` images from the averaged generator, with latent spins drawn from the
/// latent model.
pub fn generate<T: Real>(
    state: &GanState<T>,
    count: usize,
    alpha: f64,
    sampler: &mut dyn Sampler<f64>,
    rng: &mut SeededRng,
) -> Result<Array2<T>> {
    let spins = sampler.sample(&state.latent_model, count, rng)?;
    generate_from_spins(&state.generator_average, &spins, alpha, rng)
}

/// CSV with header `epoch,steps,discriminator_loss,generator_loss,latent_l1`.
pub fn traces_csv(traces: &[EpochStats]) -> String {
    let mut out = String::from("epoch,steps,discriminator_loss,generator_loss,latent_l1\n");
    for t in traces {
        let _ = writeln!(
            out,
            "{},{},{:e},{:e},{:e}",
            t.epoch, t.steps, t.discriminator_loss, t.generator_loss, t.latent_l1
        );
    }
    out
}

fn parse_traces(text: &str) -> Result<Vec<EpochStats>> {
    let mut lines = text.lines();
    if lines.next() != Some("epoch,steps,discriminator_loss,generator_loss,latent_l1") {
        return Err(Error::format("traces header", "unexpected header"));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::format("traces row", format!("malformed {line:?}"));
            if f.len() != 5 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            Ok(EpochStats {
                epoch: f[0].parse().map_err(|_| bad())?,
                steps: f[1].parse().map_err(|_| bad())?,
                discriminator_loss: num(f[2])?,
                generator_loss: num(f[3])?,
                latent_l1: num(f[4])?,
            })
        })
        .collect()
}

const CHECKPOINT_FILES: [&str; 7] = [
    "generator.bin",
    "discriminator.bin",
    "generator_adam.bin",
    "discriminator_adam.bin",
    "latent.txt",
    "traces.csv",
    "generator_average.bin",
];

/// Writes networks and optimiser states in the binary parameter format, the
/// latent model as Ising text, and the epoch traces as CSV.
pub fn save_checkpoint<T: Real>(state: &GanState<T>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_network(&state.generator, dir.join(CHECKPOINT_FILES[0]))?;
    save_network(&state.discriminator, dir.join(CHECKPOINT_FILES[1]))?;
    save_adam(&state.generator_adam, dir.join(CHECKPOINT_FILES[2]))?;
    save_adam(&state.discriminator_adam, dir.join(CHECKPOINT_FILES[3]))?;
    state.latent_model.save(&dir.join(CHECKPOINT_FILES[4]))?;
    save_network(&state.generator_average, dir.join(CHECKPOINT_FILES[6]))?;
    let path = dir.join(CHECKPOINT_FILES[5]);
    fs::write(&path, traces_csv(&state.traces)).map_err(|e| Error::io(&path, e))
}

pub fn load_checkpoint<T: Real>(dir: &Path) -> Result<GanState<T>> {
    let path = dir.join(CHECKPOINT_FILES[5]);
    let traces = parse_traces(&fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?)?;
    Ok(GanState {
        generator: load_network(dir.join(CHECKPOINT_FILES[0]))?,
        generator_average: load_network(dir.join(CHECKPOINT_FILES[6]))?,
        discriminator: load_network(dir.join(CHECKPOINT_FILES[1]))?,
        generator_adam: load_adam(dir.join(CHECKPOINT_FILES[2]))?,
        discriminator_adam: load_adam(dir.join(CHECKPOINT_FILES[3]))?,
        latent_model: IsingModel::load(&dir.join(CHECKPOINT_FILES[4]))?,
        epoch: traces.last().map_or(0, |t| t.epoch),
        traces,
    })
}
