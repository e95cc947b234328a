//! Ising-model parameters, energies, exact distributions and moments.
//!
//! The internal sign convention is `E(z) = -Σ h_i z_i - Σ J_ij z_i z_j` with
//! spins in `{-1, +1}`; positive couplings are ferromagnetic.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::graph::{Edge, LogicalGraph};
use crate::sampler::SampleSet;
use crate::{Error, Real, Result};

/// Largest model the exact routines will enumerate.
pub const DEFAULT_ENUMERATION_CAP: usize = 20;

/// A configuration of spins, each `-1` or `+1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SpinState(Vec<i8>);

impl SpinState {
    pub fn new(spins: Vec<i8>) -> Result<Self> {
        if let Some(s) = spins.iter().find(|&&s| s != 1 && s != -1) {
            return Err(Error::InvalidInput(format!("spin value {s} is not ±1")));
        }
        Ok(Self(spins))
    }

    /// State whose spin `i` is `+1` exactly when bit `i` of `index` is set.
    pub fn from_index(index: usize, n: usize) -> Self {
        Self((0..n).map(|i| if index >> i & 1 == 1 { 1 } else { -1 }).collect())
    }

    pub fn index(&self) -> usize {
        state_index(&self.0)
    }

    pub fn spins(&self) -> &[i8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Enumeration index of a spin slice (bit `i` set when spin `i` is `+1`).
pub fn state_index(spins: &[i8]) -> usize {
    spins.iter().enumerate().fold(0, |acc, (i, &s)| if s > 0 { acc | 1 << i } else { acc })
}

/// Biases `h` on the nodes and couplings `J` on the edges of a graph.
#[derive(Clone, Debug, PartialEq)]
pub struct IsingModel<T> {
    graph: LogicalGraph,
    biases: Vec<T>,
    couplings: Vec<T>,
}

impl<T: Real> IsingModel<T> {
    /// `couplings[k]` belongs to `graph.edges()[k]`.
    pub fn new(graph: LogicalGraph, biases: Vec<T>, couplings: Vec<T>) -> Result<Self> {
        if biases.len() != graph.n_nodes() {
            return Err(Error::InvalidInput(format!(
                "{} biases for {} nodes",
                biases.len(),
                graph.n_nodes()
            )));
        }
        if couplings.len() != graph.n_edges() {
            return Err(Error::InvalidInput(format!(
                "{} couplings for {} edges",
                couplings.len(),
                graph.n_edges()
            )));
        }
        if biases.iter().chain(&couplings).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("model parameters must be finite".into()));
        }
        Ok(Self { graph, biases, couplings })
    }

    pub fn zeros(graph: LogicalGraph) -> Self {
        let biases = vec![T::zero(); graph.n_nodes()];
        let couplings = vec![T::zero(); graph.n_edges()];
        Self { graph, biases, couplings }
    }

    /// Every parameter drawn uniformly from `[-scale, scale]`.
    pub fn random_uniform<R: Rng + ?Sized>(graph: LogicalGraph, scale: f64, rng: &mut R) -> Self {
        let mut draw = || T::lit(rng.random_range(-scale..=scale));
        let biases = (0..graph.n_nodes()).map(|_| draw()).collect();
        let couplings = (0..graph.n_edges()).map(|_| draw()).collect();
        Self { graph, biases, couplings }
    }

    pub fn graph(&self) -> &LogicalGraph {
        &self.graph
    }

    pub fn n_nodes(&self) -> usize {
        self.graph.n_nodes()
    }

    pub fn biases(&self) -> &[T] {
        &self.biases
    }

    pub fn couplings(&self) -> &[T] {
        &self.couplings
    }

    pub fn coupling(&self, i: usize, j: usize) -> Option<T> {
        self.graph.edge_index(i, j).map(|k| self.couplings[k])
    }

    /// Adds `delta_h` to the biases and `delta_j` to the couplings.
    pub fn shifted(&self, delta_h: &[T], delta_j: &[T]) -> Result<Self> {
        if delta_h.len() != self.biases.len() || delta_j.len() != self.couplings.len() {
            return Err(Error::InvalidInput("parameter update has the wrong shape".into()));
        }
        let biases = self.biases.iter().zip(delta_h).map(|(&a, &b)| a + b).collect();
        let couplings = self.couplings.iter().zip(delta_j).map(|(&a, &b)| a + b).collect();
        Self::new(self.graph.clone(), biases, couplings)
    }

    /// Converts the parameters to another scalar type.
    pub fn cast<U: Real>(&self) -> IsingModel<U> {
        IsingModel {
            graph: self.graph.clone(),
            biases: self.biases.iter().map(|v| U::lit(v.as_f64())).collect(),
            couplings: self.couplings.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    pub fn energy(&self, state: &[i8]) -> Result<T> {
        if state.len() != self.n_nodes() {
            return Err(Error::InvalidInput(format!(
                "state has {} spins, model has {} nodes",
                state.len(),
                self.n_nodes()
            )));
        }
        Ok(self.energy_unchecked(state))
    }

    fn energy_unchecked(&self, state: &[i8]) -> T {
        let spin = |i: usize| if state[i] > 0 { T::one() } else { -T::one() };
        let field: T = self.biases.iter().enumerate().map(|(i, &h)| h * spin(i)).sum();
        let pair: T = self
            .graph
            .edges()
            .iter()
            .zip(&self.couplings)
            .map(|(&(i, j), &w)| w * spin(i) * spin(j))
            .sum();
        -field - pair
    }

    /// Boltzmann distribution `P(z) = exp(-β E(z)) / Z` by enumerating all
    /// `2^n` states, for `n` up to `cap`.
    pub fn exact_distribution(&self, beta: T, cap: usize) -> Result<ExactDistribution<T>> {
        let n = self.n_nodes();
        if n > cap {
            return Err(Error::TooLarge { what: "model", n, cap });
        }
        check_beta(beta)?;
        let count = 1usize << n;
        let mut state = vec![-1i8; n];
        let mut energies = Vec::with_capacity(count);
        for index in 0..count {
            for (i, s) in state.iter_mut().enumerate() {
                *s = if index >> i & 1 == 1 { 1 } else { -1 };
            }
            energies.push(self.energy_unchecked(&state));
        }
        let e_min = energies.iter().copied().fold(T::infinity(), T::min);
        let mut weights: Vec<T> = energies.iter().map(|&e| (-beta * (e - e_min)).exp()).collect();
        let shifted_z: T = weights.iter().copied().sum();
        weights.iter_mut().for_each(|w| *w /= shifted_z);
        let log_partition = shifted_z.ln() - beta * e_min;
        Ok(ExactDistribution { n_nodes: n, beta, probabilities: weights, log_partition })
    }

    /// Text form: `n_nodes`, then `b i value` and `J i j value` lines.
    pub fn to_text(&self) -> String {
        let mut out = format!("{}\n", self.n_nodes());
        for (i, h) in self.biases.iter().enumerate() {
            let _ = writeln!(out, "b {i} {:e}", h.as_f64());
        }
        for (&(i, j), w) in self.graph.edges().iter().zip(&self.couplings) {
            let _ = writeln!(out, "J {i} {j} {:e}", w.as_f64());
        }
        out
    }

    /// Parses [`to_text`](Self::to_text) output. Nodes without a `b` line get
    /// bias zero; the edge set is exactly the `J` lines.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::format("n_nodes", "empty model file"))?;
        let n: usize = header
            .parse()
            .map_err(|_| Error::format("n_nodes", format!("not a count: {header:?}")))?;
        let mut biases = vec![T::zero(); n];
        let mut pairs: Vec<(Edge, T)> = Vec::new();
        for line in lines {
            let parts: Vec<&str> = line.split_whitespace().collect();
            let id = |s: &str| -> Result<usize> {
                s.parse().map_err(|_| Error::format("node id", format!("{s:?} in {line:?}")))
            };
            let value = |s: &str| -> Result<T> {
                s.parse::<f64>()
                    .map(T::lit)
                    .map_err(|_| Error::format("value", format!("{s:?} in {line:?}")))
            };
            match parts.as_slice() {
                ["b", i, v] => {
                    let i = id(i)?;
                    if i >= n {
                        return Err(Error::InvalidId { id: i, context: format!("model has {n} nodes") });
                    }
                    biases[i] = value(v)?;
                }
                ["J", i, j, v] => pairs.push(((id(i)?, id(j)?), value(v)?)),
                _ => return Err(Error::format("line", format!("unrecognised: {line:?}"))),
            }
        }
        let graph = LogicalGraph::new(n, pairs.iter().map(|&(e, _)| e))?;
        let mut couplings = vec![T::zero(); graph.n_edges()];
        for ((i, j), v) in pairs {
            let k = graph.edge_index(i, j).expect("edge was just inserted");
            couplings[k] = v;
        }
        Self::new(graph, biases, couplings)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

pub(crate) fn check_beta<T: Real>(beta: T) -> Result<()> {
    if !(beta.is_finite() && beta > T::zero()) {
        return Err(Error::InvalidParameter(format!("inverse temperature must be finite and positive, got {beta}")));
    }
    Ok(())
}

/// Enumerated Boltzmann distribution, indexed by [`state_index`].
#[derive(Clone, Debug, PartialEq)]
pub struct ExactDistribution<T> {
    n_nodes: usize,
    beta: T,
    probabilities: Vec<T>,
    log_partition: T,
}

impl<T: Real> ExactDistribution<T> {
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn probabilities(&self) -> &[T] {
        &self.probabilities
    }

    pub fn probability(&self, state: &[i8]) -> T {
        self.probabilities[state_index(state)]
    }

    /// `Z`; may overflow for large `β|E|`, see [`log_partition`](Self::log_partition).
    pub fn partition_value(&self) -> T {
        self.log_partition.exp()
    }

    pub fn log_partition(&self) -> T {
        self.log_partition
    }
}

/// Empirical probability of every enumerated state in a sample set.
pub fn empirical_probabilities<T: Real>(samples: &SampleSet, cap: usize) -> Result<Vec<T>> {
    let n = samples.n_nodes();
    if n > cap {
        return Err(Error::TooLarge { what: "sample set", n, cap });
    }
    if samples.is_empty() {
        return Err(Error::InvalidInput("empty sample set".into()));
    }
    let mut counts = vec![0u64; 1 << n];
    for s in samples.iter() {
        counts[state_index(s)] += 1;
    }
    let total = T::lit(samples.len() as f64);
    Ok(counts.into_iter().map(|c| T::lit(c as f64) / total).collect())
}

/// Every unordered pair `i < j` over `n` nodes.
pub fn all_pairs(n: usize) -> Vec<Edge> {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}

/// Node means `⟨z_i⟩` and pair correlations `⟨z_i z_j⟩` over a pair set.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments<T> {
    means: Vec<T>,
    pairs: Vec<Edge>,
    correlations: Vec<T>,
}

impl<T: Real> Moments<T> {
    pub fn new(means: Vec<T>, pairs: Vec<Edge>, correlations: Vec<T>) -> Result<Self> {
        if pairs.len() != correlations.len() {
            return Err(Error::InvalidInput("one correlation per pair required".into()));
        }
        let n = means.len();
        let mut sorted: Vec<(Edge, T)> = pairs.into_iter().map(|(i, j)| if i < j { (i, j) } else { (j, i) }).zip(correlations).collect();
        sorted.sort_by_key(|a| a.0);
        if sorted.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidInput("duplicate moment pair".into()));
        }
        if let Some(&((_, j), _)) = sorted.iter().find(|((i, j), _)| i == j || *j >= n) {
            return Err(Error::InvalidId { id: j, context: format!("moments over {n} nodes") });
        }
        let (pairs, correlations) = sorted.into_iter().unzip();
        Ok(Self { means, pairs, correlations })
    }

    /// Sample moments over `pairs`.
    pub fn from_samples(samples: &SampleSet, pairs: &[Edge]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("moments of an empty sample set".into()));
        }
        let n = samples.n_nodes();
        let mut sums = vec![0i64; n];
        let mut pair_sums = vec![0i64; pairs.len()];
        for s in samples.iter() {
            for (acc, &z) in sums.iter_mut().zip(s) {
                *acc += i64::from(z);
            }
            for (acc, &(i, j)) in pair_sums.iter_mut().zip(pairs) {
                *acc += i64::from(s[i] * s[j]);
            }
        }
        let m = T::lit(samples.len() as f64);
        let means = sums.into_iter().map(|v| T::lit(v as f64) / m).collect();
        let corr = pair_sums.into_iter().map(|v| T::lit(v as f64) / m).collect();
        Self::new(means, pairs.to_vec(), corr)
    }

    /// Expectations under an exact distribution.
    pub fn from_distribution(dist: &ExactDistribution<T>, pairs: &[Edge]) -> Result<Self> {
        let n = dist.n_nodes();
        let mut means = vec![T::zero(); n];
        let mut corr = vec![T::zero(); pairs.len()];
        let sign = |index: usize, i: usize| if index >> i & 1 == 1 { T::one() } else { -T::one() };
        for (index, &p) in dist.probabilities().iter().enumerate() {
            for (i, m) in means.iter_mut().enumerate() {
                *m += p * sign(index, i);
            }
            for (c, &(i, j)) in corr.iter_mut().zip(pairs) {
                *c += p * sign(index, i) * sign(index, j);
            }
        }
        Self::new(means, pairs.to_vec(), corr)
    }

    pub fn means(&self) -> &[T] {
        &self.means
    }

    pub fn pairs(&self) -> &[Edge] {
        &self.pairs
    }

    pub fn correlations(&self) -> &[T] {
        &self.correlations
    }

    pub fn n_nodes(&self) -> usize {
        self.means.len()
    }

    pub fn correlation(&self, i: usize, j: usize) -> Option<T> {
        let key = if i < j { (i, j) } else { (j, i) };
        self.pairs.binary_search(&key).ok().map(|k| self.correlations[k])
    }
}
