//! Inception Score and Fréchet Inception Distance under a small MNIST
//! classifier.

mod linalg;

use std::fs;
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;

pub use linalg::{matrix_sqrt_psd, symmetric_eigen, trace_sqrt_product, NEGATIVE_TOL, SYMMETRY_TOL};

use crate::dataset::{ImageSet, PixelKind};
use crate::neural::{load_network, save_network, Activation, AdamConfig, AdamState, Network, OutputGrad};
use crate::rng::stream;
use crate::{Error, Real, Result};

/// Fewest images [`inception_score`] accepts.
pub const MIN_SCORE_IMAGES: usize = 100;
pub const N_CLASSES: usize = 10;

/// Mean and unbiased covariance of a feature sample.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianStats<T> {
    pub mean: Array1<T>,
    pub cov: Array2<T>,
}

impl<T: Real> GaussianStats<T> {
    pub fn new(mean: Array1<T>, cov: Array2<T>) -> Result<Self> {
        let d = mean.len();
        if cov.dim() != (d, d) {
            return Err(Error::InvalidInput(format!("covariance {:?} for a {d}-dimensional mean", cov.dim())));
        }
        Ok(Self { mean, cov })
    }

    /// Fit to the rows of `features`, normalising the covariance by `n - 1`.
    pub fn fit(features: ArrayView2<'_, T>) -> Result<Self> {
        let n = features.nrows();
        if n < 2 {
            return Err(Error::InvalidInput(format!("covariance needs at least 2 samples, got {n}")));
        }
        let mean = features.mean_axis(Axis(0)).expect("rows checked above");
        let centred = &features - &mean;
        let mut cov = centred.t().dot(&centred);
        cov.mapv_inplace(|v| v / T::lit((n - 1) as f64));
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// `‖μ_a - μ_b‖² + Tr(Σ_a + Σ_b - 2 (Σ_a Σ_b)^{1/2})`.
pub fn frechet_distance<T: Real>(a: &GaussianStats<T>, b: &GaussianStats<T>) -> Result<T> {
    if a.dim() != b.dim() {
        return Err(Error::InvalidInput(format!("feature dimensions {} and {}", a.dim(), b.dim())));
    }
    let diff = &a.mean - &b.mean;
    let cross = trace_sqrt_product(a.cov.view(), b.cov.view())?;
    let trace = a.cov.diag().sum() + b.cov.diag().sum();
    Ok(diff.dot(&diff) + trace - T::lit(2.0) * cross)
}

fn check_posteriors<T: Real>(probs: &ArrayView2<'_, T>) -> Result<()> {
    let tol = T::lit(1e-6);
    for (i, row) in probs.outer_iter().enumerate() {
        let total: T = row.sum();
        if row.iter().any(|&p| p.is_nan() || p < T::zero()) || (total - T::one()).abs() > tol {
            return Err(Error::InvalidInput(format!("row {i} is not a probability vector (sum {total})")));
        }
    }
    Ok(())
}

/// `exp` of the mean KL between each row and the column mean, averaged over
/// `splits` contiguous chunks.
pub fn inception_score_from_probs<T: Real>(probs: ArrayView2<'_, T>, splits: usize) -> Result<T> {
    let n = probs.nrows();
    if n < MIN_SCORE_IMAGES {
        return Err(Error::InvalidInput(format!("inception score needs at least {MIN_SCORE_IMAGES} images, got {n}")));
    }
    if splits == 0 || splits > n {
        return Err(Error::InvalidParameter(format!("{splits} splits for {n} images")));
    }
    check_posteriors(&probs)?;
    let mut total = T::zero();
    for k in 0..splits {
        let part = probs.slice(s![k * n / splits..(k + 1) * n / splits, ..]);
        let marginal = column_means(&part);
        let kl = part
            .outer_iter()
            .map(|row| row.iter().zip(&marginal).filter(|(&p, _)| p > T::zero()).map(|(&p, &q)| p * (p / q).ln()).sum::<T>());
        total += compensated_mean(kl, part.nrows()).exp();
    }
    Ok(total / T::lit(splits as f64))
}

/// Neumaier-compensated mean of `n` values, so identical values average
/// back to themselves exactly.
fn compensated_mean<T: Real>(values: impl IntoIterator<Item = T>, n: usize) -> T {
    let (mut sum, mut comp) = (T::zero(), T::zero());
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    (sum + comp) / T::lit(n as f64)
}

fn column_means<T: Real>(m: &ArrayView2<'_, T>) -> Array1<T> {
    Array1::from_iter(m.columns().into_iter().map(|col| compensated_mean(col.iter().copied(), m.nrows())))
}

#[derive(Clone, Debug, PartialEq)]
pub struct InceptionConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub min_accuracy: f64,
    /// Constant images with uniform targets appended to every batch, so
    /// structureless input gets a flat posterior.
    pub blanks_per_batch: usize,
    pub seed: u64,
}

impl Default for InceptionConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256, 64],
            epochs: 5,
            batch_size: 100,
            adam: AdamConfig { rate: 1e-3, beta1: 0.9, ..AdamConfig::default() },
            min_accuracy: 0.90,
            blanks_per_batch: 10,
            seed: 0,
        }
    }
}

/// Classifier over images with pixels in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct InceptionModel {
    pub net: Network<f64>,
    /// Layer whose outputs feed the FID (1-based as in
    /// [`Forward::layer`](crate::neural::Forward::layer)).
    pub feature_layer: usize,
    pub test_accuracy: f64,
}

const EVAL_BATCH: usize = 1000;

fn labels_of(set: &ImageSet) -> Result<Vec<usize>> {
    let labels = set.labels().ok_or_else(|| Error::InvalidInput("classifier training needs labels".into()))?;
    if let Some(&l) = labels.iter().find(|&&l| l as usize >= N_CLASSES) {
        return Err(Error::InvalidInput(format!("label {l} out of range")));
    }
    Ok(labels.iter().map(|&l| l as usize).collect())
}

fn signed_pixels(set: &ImageSet) -> Result<Array2<f64>> {
    match set.kind() {
        PixelKind::Intensity => Ok(set.to_signed()?.pixels().to_owned()),
        _ => Ok(set.pixels().to_owned()),
    }
}

impl InceptionModel {
    fn check_width(&self, images: &ArrayView2<'_, f64>) -> Result<()> {
        if images.ncols() != self.net.input_dim() {
            return Err(Error::InvalidInput(format!(
                "images have {} pixels, classifier expects {}",
                images.ncols(),
                self.net.input_dim()
            )));
        }
        Ok(())
    }

    /// Class posteriors, one row per image.
    pub fn probabilities(&self, images: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_width(&images)?;
        let mut out = Array2::zeros((images.nrows(), N_CLASSES));
        for (chunk, mut dst) in images.axis_chunks_iter(Axis(0), EVAL_BATCH).zip(out.axis_chunks_iter_mut(Axis(0), EVAL_BATCH)) {
            dst.assign(&self.net.predict(chunk)?);
        }
        Ok(out)
    }

    /// Activations of the feature layer.
    pub fn features(&self, images: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_width(&images)?;
        let width = self.net.layers()[self.feature_layer - 1].outputs();
        let mut out = Array2::zeros((images.nrows(), width));
        for (chunk, mut dst) in images.axis_chunks_iter(Axis(0), EVAL_BATCH).zip(out.axis_chunks_iter_mut(Axis(0), EVAL_BATCH)) {
            dst.assign(self.net.forward(chunk)?.layer(self.feature_layer));
        }
        Ok(out)
    }

    pub fn accuracy(&self, images: ArrayView2<'_, f64>, labels: &[usize]) -> Result<f64> {
        if labels.len() != images.nrows() || labels.is_empty() {
            return Err(Error::InvalidInput(format!("{} labels for {} images", labels.len(), images.nrows())));
        }
        let probs = self.probabilities(images)?;
        let hits = probs.outer_iter().zip(labels).filter(|(row, &l)| argmax(row.iter().copied()) == l).count();
        Ok(hits as f64 / labels.len() as f64)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_network(&self.net, dir.join("classifier.bin"))?;
        let meta = format!("feature_layer={}\ntest_accuracy={:e}\n", self.feature_layer, self.test_accuracy);
        let path = dir.join("classifier.txt");
        fs::write(&path, meta).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let net = load_network(dir.join("classifier.bin"))?;
        let path = dir.join("classifier.txt");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut feature_layer = None;
        let mut test_accuracy = None;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            match line.split_once('=') {
                Some(("feature_layer", v)) => feature_layer = v.trim().parse::<usize>().ok(),
                Some(("test_accuracy", v)) => test_accuracy = v.trim().parse::<f64>().ok(),
                _ => return Err(Error::format("classifier metadata", format!("unexpected line {line:?}"))),
            }
        }
        let feature_layer = feature_layer.ok_or_else(|| Error::format("feature_layer", "missing or malformed"))?;
        if feature_layer == 0 || feature_layer > net.n_layers() {
            return Err(Error::format("feature_layer", format!("{feature_layer} for {} layers", net.n_layers())));
        }
        let test_accuracy = test_accuracy.ok_or_else(|| Error::format("test_accuracy", "missing or malformed"))?;
        Ok(Self { net, feature_layer, test_accuracy })
    }
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Softmax cross-entropy gradient; rows past `targets` aim at the uniform
/// distribution.
fn classifier_grad(y: ArrayView2<'_, f64>, targets: &[usize]) -> Array2<f64> {
    let n = y.nrows() as f64;
    let mut g = y.to_owned();
    for (i, mut row) in g.outer_iter_mut().enumerate() {
        match targets.get(i) {
            Some(&t) => row[t] -= 1.0,
            None => row -= 1.0 / N_CLASSES as f64,
        }
        row /= n;
    }
    g
}

/// Train the classifier with softmax cross-entropy and Adam. Fails with
/// [`Error::TrainingFailure`] when the test accuracy misses
/// `config.min_accuracy`.
pub fn train_inception(train: &ImageSet, test: &ImageSet, config: &InceptionConfig) -> Result<InceptionModel> {
    config.adam.validate()?;
    if config.epochs == 0 || config.batch_size == 0 || config.hidden.is_empty() {
        return Err(Error::InvalidParameter("classifier needs epochs, a batch size and hidden layers".into()));
    }
    let train_labels = labels_of(train)?;
    let test_labels = labels_of(test)?;
    let x = signed_pixels(train)?;
    let mut widths = vec![x.ncols()];
    widths.extend(&config.hidden);
    widths.push(N_CLASSES);
    let mut acts = vec![Activation::Relu; config.hidden.len()];
    acts.push(Activation::Softmax);
    let mut init_rng = stream(config.seed, "inception-init", 0);
    let mut net = Network::glorot(&widths, &acts, &mut init_rng)?;
    let mut adam = AdamState::new(&net, config.adam);
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut stream(config.seed, "inception-order", epoch as u64));
        let mut blank_rng = stream(config.seed, "inception-blank", epoch as u64);
        for batch in order.chunks(config.batch_size) {
            let mut xb = x.select(Axis(0), batch);
            for _ in 0..config.blanks_per_batch {
                let level = blank_rng.random_range(-1.0..=1.0);
                xb.push_row(Array1::from_elem(x.ncols(), level).view()).expect("row width matches");
            }
            let targets: Vec<usize> = batch.iter().map(|&i| train_labels[i]).collect();
            let cache = net.forward(xb.view())?;
            let grad = classifier_grad(cache.output().view(), &targets);
            net.backward_step(&cache, OutputGrad::PreActivation(grad), &mut adam)?;
        }
    }
    let mut model = InceptionModel { net, feature_layer: config.hidden.len(), test_accuracy: 0.0 };
    model.test_accuracy = model.accuracy(signed_pixels(test)?.view(), &test_labels)?;
    if model.test_accuracy < config.min_accuracy {
        return Err(Error::TrainingFailure(format!(
            "classifier reached test accuracy {:.4}, below the required {:.2}",
            model.test_accuracy, config.min_accuracy
        )));
    }
    Ok(model)
}

/// Inception Score of `images` (pixels in `[-1, 1]`).
pub fn inception_score(model: &InceptionModel, images: ArrayView2<'_, f64>, splits: usize) -> Result<f64> {
    if images.nrows() < MIN_SCORE_IMAGES {
        return Err(Error::InvalidInput(format!(
            "inception score needs at least {MIN_SCORE_IMAGES} images, got {}",
            images.nrows()
        )));
    }
    inception_score_from_probs(model.probabilities(images)?.view(), splits)
}

/// FID between two image sets under the model's feature layer. Each set
/// needs more rows than the feature width so neither covariance is
/// rank-deficient by construction.
pub fn fid(model: &InceptionModel, real: ArrayView2<'_, f64>, generated: ArrayView2<'_, f64>) -> Result<f64> {
    let width = model.net.layers()[model.feature_layer - 1].outputs();
    for (name, set) in [("real", &real), ("generated", &generated)] {
        if set.nrows() < width + 1 {
            return Err(Error::InvalidInput(format!(
                "{name} set has {} images; FID needs at least {} for {width} features",
                set.nrows(),
                width + 1
            )));
        }
    }
    let a = GaussianStats::fit(model.features(real)?.view())?;
    let b = GaussianStats::fit(model.features(generated)?.view())?;
    frechet_distance(&a, &b)
}
