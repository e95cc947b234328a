//! Fully-visible Boltzmann machine training by moment matching.
//!
//! Each epoch estimates model moments with a [`Sampler`] and moves the
//! parameters along `⟨·⟩_data - ⟨·⟩_model`. The inverse temperature of the
//! sampler is never estimated: the learning rate stands for the product of
//! rate and β.

use std::fmt::Write as _;

use crate::ising::{all_pairs, empirical_probabilities, ExactDistribution, IsingModel, Moments};
use crate::rng::SeededRng;
use crate::sampler::{SampleOrigin, SampleSet, Sampler};
use crate::{Error, Real, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig<T> {
    pub effective_rate: T,
    pub epochs: usize,
    pub samples_per_step: usize,
    pub sampler_kind: SampleOrigin,
    /// KL(data ‖ model) is recorded while the model has at most this many
    /// nodes. Zero disables it.
    pub kl_cap: usize,
    /// Keep a copy of the parameters every this many epochs.
    pub snapshot_every: Option<usize>,
}

impl<T: Real> TrainConfig<T> {
    pub fn new(effective_rate: T, epochs: usize, samples_per_step: usize, sampler_kind: SampleOrigin) -> Self {
        Self { effective_rate, epochs, samples_per_step, sampler_kind, kl_cap: 12, snapshot_every: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.effective_rate.is_finite() && self.effective_rate > T::zero()) {
            return Err(Error::InvalidParameter(format!("learning rate must be positive, got {}", self.effective_rate)));
        }
        if self.epochs == 0 || self.samples_per_step == 0 {
            return Err(Error::InvalidParameter("epochs and samples per step must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord<T> {
    pub epoch: usize,
    pub l1_norm: T,
    pub kl: Option<T>,
    /// Index into [`TrainTrace::snapshots`] when a snapshot was kept.
    pub snapshot: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainTrace<T> {
    pub seed: u64,
    pub records: Vec<EpochRecord<T>>,
    pub snapshots: Vec<IsingModel<T>>,
}

impl<T: Real> TrainTrace<T> {
    pub fn final_l1(&self) -> Option<T> {
        self.records.last().map(|r| r.l1_norm)
    }

    /// CSV with header `epoch,l1_norm,kl,seed`; `kl` is empty when not
    /// recorded.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,l1_norm,kl,seed\n");
        for r in &self.records {
            let kl = r.kl.map(|v| format!("{:e}", v.as_f64())).unwrap_or_default();
            let _ = writeln!(out, "{},{:e},{},{}", r.epoch, r.l1_norm.as_f64(), kl, self.seed);
        }
        out
    }
}

/// `J += rate (⟨zz⟩_data - ⟨zz⟩_model)` on every model edge and
/// `h += rate (⟨z⟩_data - ⟨z⟩_model)` on every node.
pub fn gradient_step<T: Real>(
    model: &IsingModel<T>,
    data: &Moments<T>,
    model_moments: &Moments<T>,
    effective_rate: T,
) -> Result<IsingModel<T>> {
    let n = model.n_nodes();
    if data.n_nodes() != n || model_moments.n_nodes() != n {
        return Err(Error::InvalidInput(format!(
            "moments over {} and {} nodes for a {n}-node model",
            data.n_nodes(),
            model_moments.n_nodes()
        )));
    }
    let delta_h: Vec<T> = data
        .means()
        .iter()
        .zip(model_moments.means())
        .map(|(&d, &m)| effective_rate * (d - m))
        .collect();
    let mut delta_j = Vec::with_capacity(model.graph().n_edges());
    for &(i, j) in model.graph().edges() {
        let missing = || Error::InvalidInput(format!("no moment for edge ({i}, {j})"));
        let d = data.correlation(i, j).ok_or_else(missing)?;
        let m = model_moments.correlation(i, j).ok_or_else(missing)?;
        delta_j.push(effective_rate * (d - m));
    }
    model.shifted(&delta_h, &delta_j)
}

/// `Σ |⟨z_i z_j⟩_data - ⟨z_i z_j⟩_model|` over the pairs of `data`, which
/// `model_moments` must share.
pub fn l1_norm<T: Real>(data: &Moments<T>, model_moments: &Moments<T>) -> Result<T> {
    if data.pairs() != model_moments.pairs() {
        return Err(Error::InvalidInput("moment pair sets differ".into()));
    }
    Ok(data
        .correlations()
        .iter()
        .zip(model_moments.correlations())
        .map(|(&a, &b)| (a - b).abs())
        .sum())
}

/// `Σ p ln(p / q)` over two probability vectors on the same state space.
pub fn kl_divergence_probs<T: Real>(p: &[T], q: &[T]) -> Result<T> {
    if p.len() != q.len() {
        return Err(Error::InvalidInput(format!("state spaces of size {} and {}", p.len(), q.len())));
    }
    let mut total = T::zero();
    for (k, (&pk, &qk)) in p.iter().zip(q).enumerate() {
        if pk <= T::zero() {
            continue;
        }
        if qk <= T::zero() {
            return Err(Error::DivergenceUndefined(format!("q is zero at state {k} where p = {pk}")));
        }
        total += pk * (pk / qk).ln();
    }
    Ok(total.max(T::zero()))
}

/// Relative entropy of two diagonal (classical) distributions.
pub fn kl_divergence<T: Real>(p: &ExactDistribution<T>, q: &ExactDistribution<T>) -> Result<T> {
    if p.n_nodes() != q.n_nodes() {
        return Err(Error::InvalidInput("distributions over different node counts".into()));
    }
    kl_divergence_probs(p.probabilities(), q.probabilities())
}

/// Trains `model` on `data`. Each epoch records the L1-norm between the data
/// correlations and the model moments used for that epoch's update (over all
/// node pairs), then applies [`gradient_step`].
pub fn train<T: Real>(
    model: &IsingModel<T>,
    data: &SampleSet,
    config: &TrainConfig<T>,
    sampler: &mut dyn Sampler<T>,
    seed: u64,
    rng: &mut SeededRng,
) -> Result<(IsingModel<T>, TrainTrace<T>)> {
    config.validate()?;
    if sampler.origin() != config.sampler_kind {
        return Err(Error::Config(format!(
            "config asks for {:?} sampling but the sampler is {:?}",
            config.sampler_kind,
            sampler.origin()
        )));
    }
    let n = model.n_nodes();
    if data.n_nodes() != n {
        return Err(Error::InvalidInput(format!("data has {} spins per state, model has {n} nodes", data.n_nodes())));
    }
    let pairs = all_pairs(n);
    let data_moments = Moments::from_samples(data, &pairs)?;
    let data_probs = if n <= config.kl_cap { Some(empirical_probabilities::<T>(data, config.kl_cap)?) } else { None };

    let mut model = model.clone();
    let mut trace = TrainTrace { seed, records: Vec::with_capacity(config.epochs), snapshots: Vec::new() };
    for epoch in 1..=config.epochs {
        let model_moments = sampler.moments(&model, config.samples_per_step, &pairs, rng)?;
        let l1 = l1_norm(&data_moments, &model_moments)?;
        let kl = match &data_probs {
            Some(p) => {
                let q = model.exact_distribution(sampler.beta(), config.kl_cap)?;
                Some(kl_divergence_probs(p, q.probabilities())?)
            }
            None => None,
        };
        model = gradient_step(&model, &data_moments, &model_moments, config.effective_rate)?;
        let snapshot = match config.snapshot_every {
            Some(every) if every > 0 && epoch % every == 0 => {
                trace.snapshots.push(model.clone());
                Some(trace.snapshots.len() - 1)
            }
            _ => None,
        };
        trace.records.push(EpochRecord { epoch, l1_norm: l1, kl, snapshot });
    }
    Ok((model, trace))
}
