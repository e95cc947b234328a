//! Spin samplers: exact enumeration, Gibbs MCMC, and the annealer surrogate.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::graph::{build_chimera, chimera_hardware, decode_majority, embed, EmbedConfig, Embedding, HardwareGraph, LogicalGraph};
use crate::ising::{check_beta, IsingModel, Moments};
use crate::rng::SeededRng;
use crate::scalar::sigmoid;
use crate::{Error, Real, Result};

/// β above which single-site Gibbs is unlikely to mix.
pub const NONERGODIC_BETA: f64 = 1e3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SampleOrigin {
    /// Given states, e.g. binarized training images.
    Data,
    Exact,
    Gibbs,
    AnnealerSurrogate,
}

impl SampleOrigin {
    pub fn name(self) -> &'static str {
        match self {
            SampleOrigin::Data => "data",
            SampleOrigin::Exact => "exact",
            SampleOrigin::Gibbs => "gibbs",
            SampleOrigin::AnnealerSurrogate => "surrogate",
        }
    }

    /// Parses a sampler name; `data` is not a sampler and is rejected.
    pub fn parse_sampler(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(SampleOrigin::Exact),
            "gibbs" => Ok(SampleOrigin::Gibbs),
            "surrogate" | "annealer_surrogate" => Ok(SampleOrigin::AnnealerSurrogate),
            other => Err(Error::Config(format!("unknown sampler {other:?} (expected exact, gibbs or surrogate)"))),
        }
    }
}

/// Spin configurations of equal length, stored row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleSet {
    n_nodes: usize,
    spins: Vec<i8>,
    origin: SampleOrigin,
}

impl SampleSet {
    pub fn from_flat(n_nodes: usize, spins: Vec<i8>, origin: SampleOrigin) -> Result<Self> {
        if n_nodes == 0 || !spins.len().is_multiple_of(n_nodes) {
            return Err(Error::InvalidInput(format!("{} spins do not split into states of {n_nodes}", spins.len())));
        }
        if spins.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidInput("spins must be ±1".into()));
        }
        Ok(Self { n_nodes, spins, origin })
    }

    pub fn from_states(n_nodes: usize, states: &[Vec<i8>]) -> Result<Self> {
        if let Some(s) = states.iter().find(|s| s.len() != n_nodes) {
            return Err(Error::InvalidInput(format!("state of length {} in a set of {n_nodes}", s.len())));
        }
        Self::from_flat(n_nodes, states.concat(), SampleOrigin::Data)
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn len(&self) -> usize {
        self.spins.len() / self.n_nodes
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    pub fn origin(&self) -> SampleOrigin {
        self.origin
    }

    pub fn state(&self, k: usize) -> &[i8] {
        &self.spins[k * self.n_nodes..(k + 1) * self.n_nodes]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, i8> {
        self.spins.chunks_exact(self.n_nodes)
    }

    pub fn as_flat(&self) -> &[i8] {
        &self.spins
    }

    /// New set made of the states at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut spins = Vec::with_capacity(indices.len() * self.n_nodes);
        for &k in indices {
            spins.extend_from_slice(self.state(k));
        }
        Self { n_nodes: self.n_nodes, spins, origin: self.origin }
    }

    /// One line per sample, space-separated `±1` values.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.spins.len() * 3);
        for state in self.iter() {
            for (i, &s) in state.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{s}");
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Order in which a sweep visits sites.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScanOrder {
    /// Block updates on bipartite graphs, random scan otherwise.
    Auto,
    /// Every site once per sweep, in a fresh random permutation.
    RandomScan,
    /// All sites of one colour class, then the other. Requires a bipartite
    /// graph; sites within a class are conditionally independent.
    Block,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GibbsConfig<T> {
    pub burn_in: usize,
    pub thinning: usize,
    pub n_chains: usize,
    pub beta: T,
    pub scan: ScanOrder,
}

impl<T: Real> GibbsConfig<T> {
    pub fn new(burn_in: usize, thinning: usize, n_chains: usize, beta: T) -> Self {
        Self { burn_in, thinning, n_chains, beta, scan: ScanOrder::Auto }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thinning == 0 {
            return Err(Error::InvalidParameter("thinning must be at least 1".into()));
        }
        if self.n_chains == 0 {
            return Err(Error::InvalidParameter("need at least one chain".into()));
        }
        check_beta(self.beta)
    }
}

impl<T: Real> Default for GibbsConfig<T> {
    fn default() -> Self {
        Self::new(100, 2, 32, T::one())
    }
}

fn check_count(m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::InvalidInput("requested zero samples".into()));
    }
    Ok(())
}

/// `m` independent draws from the exact distribution by inverse CDF over the
/// enumerated states.
pub fn sample_exact<T: Real, R: Rng + ?Sized>(
    model: &IsingModel<T>,
    beta: T,
    m: usize,
    cap: usize,
    rng: &mut R,
) -> Result<SampleSet> {
    check_count(m)?;
    let dist = model.exact_distribution(beta, cap)?;
    let n = model.n_nodes();
    let mut cdf = Vec::with_capacity(dist.probabilities().len());
    let mut acc = 0.0f64;
    for p in dist.probabilities() {
        acc += p.as_f64();
        cdf.push(acc);
    }
    let total = acc;
    let mut spins = Vec::with_capacity(m * n);
    for _ in 0..m {
        let u = rng.random::<f64>() * total;
        let index = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
        spins.extend((0..n).map(|i| if index >> i & 1 == 1 { 1i8 } else { -1 }));
    }
    SampleSet::from_flat(n, spins, SampleOrigin::Exact)
}

/// Compressed adjacency with couplings, used by the sweep kernel.
struct Kernel<T> {
    offsets: Vec<usize>,
    neighbours: Vec<usize>,
    weights: Vec<T>,
    biases: Vec<T>,
    colours: Option<Vec<u8>>,
}

impl<T: Real> Kernel<T> {
    fn new(model: &IsingModel<T>) -> Self {
        let n = model.n_nodes();
        let mut lists: Vec<Vec<(usize, T)>> = vec![Vec::new(); n];
        for (&(i, j), &w) in model.graph().edges().iter().zip(model.couplings()) {
            lists[i].push((j, w));
            lists[j].push((i, w));
        }
        let mut offsets = vec![0];
        let mut neighbours = Vec::new();
        let mut weights = Vec::new();
        for list in lists {
            for (j, w) in list {
                neighbours.push(j);
                weights.push(w);
            }
            offsets.push(neighbours.len());
        }
        Self {
            offsets,
            neighbours,
            weights,
            biases: model.biases().to_vec(),
            colours: model.graph().bipartition(),
        }
    }

    #[inline]
    fn update<R: Rng + ?Sized>(&self, state: &mut [i8], i: usize, two_beta: T, rng: &mut R) {
        let mut field = self.biases[i];
        for k in self.offsets[i]..self.offsets[i + 1] {
            let z = state[self.neighbours[k]];
            if z > 0 {
                field += self.weights[k];
            } else {
                field -= self.weights[k];
            }
        }
        let p_up = sigmoid(two_beta * field).as_f64();
        state[i] = if rng.random::<f64>() < p_up { 1 } else { -1 };
    }
}

/// Reusable site order for one scan policy.
struct Sweeper {
    order: Vec<usize>,
    shuffle: bool,
}

impl Sweeper {
    fn new<T: Real>(kernel: &Kernel<T>, scan: ScanOrder) -> Result<Self> {
        let n = kernel.biases.len();
        let block = |colours: &Vec<u8>| {
            let mut order: Vec<usize> = (0..n).filter(|&i| colours[i] == 0).collect();
            order.extend((0..n).filter(|&i| colours[i] == 1));
            order
        };
        Ok(match (scan, &kernel.colours) {
            (ScanOrder::Block, None) => {
                return Err(Error::InvalidParameter("block Gibbs needs a bipartite graph".into()))
            }
            (ScanOrder::Block | ScanOrder::Auto, Some(c)) => Self { order: block(c), shuffle: false },
            _ => Self { order: (0..n).collect(), shuffle: true },
        })
    }

    fn sweep<T: Real, R: Rng + ?Sized>(&mut self, kernel: &Kernel<T>, state: &mut [i8], two_beta: T, rng: &mut R) {
        if self.shuffle {
            self.order.shuffle(rng);
        }
        for &i in &self.order {
            kernel.update(state, i, two_beta, rng);
        }
    }
}

/// Single-site heat-bath Gibbs sampling. Each chain starts from a uniform
/// random state and runs `burn_in` sweeps; records are then taken
/// round-robin over chains, `thinning` sweeps apart on each chain.
pub fn sample_gibbs<T: Real, R: Rng + ?Sized>(
    model: &IsingModel<T>,
    config: &GibbsConfig<T>,
    m: usize,
    rng: &mut R,
) -> Result<SampleSet> {
    check_count(m)?;
    config.validate()?;
    if config.beta.as_f64() >= NONERGODIC_BETA {
        log::warn!("beta = {} is likely non-ergodic for Gibbs sampling", config.beta);
    }
    let n = model.n_nodes();
    let kernel = Kernel::new(model);
    let mut sweeper = Sweeper::new(&kernel, config.scan)?;
    let two_beta = config.beta + config.beta;
    let mut chains: Vec<Vec<i8>> = (0..config.n_chains)
        .map(|_| (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect())
        .collect();
    for chain in &mut chains {
        for _ in 0..config.burn_in {
            sweeper.sweep(&kernel, chain, two_beta, rng);
        }
    }
    let mut spins = Vec::with_capacity(m * n);
    for k in 0..m {
        let chain = &mut chains[k % config.n_chains];
        for _ in 0..config.thinning {
            sweeper.sweep(&kernel, chain, two_beta, rng);
        }
        spins.extend_from_slice(chain);
    }
    SampleSet::from_flat(n, spins, SampleOrigin::Gibbs)
}

/// Hardware-level model realising a logical model through an embedding,
/// over the used qubits only.
#[derive(Clone, Debug)]
pub struct EmbeddedModel<T> {
    pub model: IsingModel<T>,
    /// For each logical node, the compact indices of its chain's qubits.
    pub chains: Vec<Vec<usize>>,
    /// Hardware id of each compact index.
    pub qubits: Vec<usize>,
}

/// Builds the embedded model: each logical bias is split equally over its
/// chain, each logical coupling sits on one coupler between the two chains,
/// and every coupler inside a chain carries the chain coupling.
pub fn embed_model<T: Real>(
    model: &IsingModel<T>,
    embedding: &Embedding,
    hardware: &HardwareGraph,
) -> Result<EmbeddedModel<T>> {
    embedding
        .validate(model.graph(), hardware)
        .map_err(|e| Error::InvalidEmbedding(e.to_string()))?;
    let mut compact = vec![usize::MAX; hardware.n_qubits()];
    let mut qubits = Vec::new();
    let mut chains = Vec::with_capacity(model.n_nodes());
    for chain in embedding.chains() {
        let mut local = Vec::with_capacity(chain.len());
        for &q in chain {
            compact[q] = qubits.len();
            local.push(qubits.len());
            qubits.push(q);
        }
        chains.push(local);
    }
    let mut biases = vec![T::zero(); qubits.len()];
    for (v, chain) in chains.iter().enumerate() {
        let share = model.biases()[v] / T::lit(chain.len() as f64);
        for &c in chain {
            biases[c] = share;
        }
    }
    let mut edges = Vec::new();
    let mut values = Vec::new();
    let chain_j = T::lit(embedding.chain_coupling());
    for chain in embedding.chains() {
        for (a, &qa) in chain.iter().enumerate() {
            for &qb in &chain[a + 1..] {
                if hardware.has_edge(qa, qb) {
                    edges.push((compact[qa], compact[qb]));
                    values.push(chain_j);
                }
            }
        }
    }
    for (&(i, j), &w) in model.graph().edges().iter().zip(model.couplings()) {
        let (qa, qb) = embedding
            .coupler(i, j, hardware)
            .ok_or_else(|| Error::InvalidEmbedding(format!("no coupler for ({i}, {j})")))?;
        edges.push((compact[qa], compact[qb]));
        values.push(w);
    }
    let graph = LogicalGraph::new(qubits.len(), edges.iter().copied())?;
    let mut couplings = vec![T::zero(); graph.n_edges()];
    for (&(a, b), w) in edges.iter().zip(values) {
        couplings[graph.edge_index(a, b).expect("edge present")] = w;
    }
    Ok(EmbeddedModel { model: IsingModel::new(graph, biases, couplings)?, chains, qubits })
}

/// Majority-decodes hardware samples back to logical spins.
pub fn decode_samples<R: Rng + ?Sized>(hardware_samples: &SampleSet, chains: &[Vec<usize>], rng: &mut R) -> Result<SampleSet> {
    let mut spins = Vec::with_capacity(hardware_samples.len() * chains.len());
    let mut buf = Vec::new();
    for state in hardware_samples.iter() {
        for chain in chains {
            buf.clear();
            buf.extend(chain.iter().map(|&c| state[c]));
            spins.push(decode_majority(&buf, rng)?);
        }
    }
    SampleSet::from_flat(chains.len(), spins, SampleOrigin::AnnealerSurrogate)
}

/// Classical stand-in for an annealer: Gibbs-sample the embedded
/// hardware-level model, then decode each chain by majority vote.
pub fn sample_annealer_surrogate<T: Real, R: Rng + ?Sized>(
    model: &IsingModel<T>,
    embedding: &Embedding,
    hardware: &HardwareGraph,
    config: &GibbsConfig<T>,
    m: usize,
    rng: &mut R,
) -> Result<SampleSet> {
    let embedded = embed_model(model, embedding, hardware)?;
    let raw = sample_gibbs(&embedded.model, config, m, rng)?;
    decode_samples(&raw, &embedded.chains, rng)
}

/// A source of model samples for training loops.
pub trait Sampler<T: Real> {
    fn origin(&self) -> SampleOrigin;

    /// Inverse temperature the sampler targets.
    fn beta(&self) -> T;

    fn sample(&mut self, model: &IsingModel<T>, m: usize, rng: &mut SeededRng) -> Result<SampleSet>;

    /// Model moments over `pairs`; by default the moments of `m` samples.
    fn moments(&mut self, model: &IsingModel<T>, m: usize, pairs: &[crate::graph::Edge], rng: &mut SeededRng) -> Result<Moments<T>> {
        Moments::from_samples(&self.sample(model, m, rng)?, pairs)
    }
}

/// Exact enumeration. Its [`moments`](Sampler::moments) are the exact
/// expectations rather than sample averages.
#[derive(Clone, Debug)]
pub struct ExactSampler<T> {
    pub beta: T,
    pub cap: usize,
}

impl<T: Real> Sampler<T> for ExactSampler<T> {
    fn origin(&self) -> SampleOrigin {
        SampleOrigin::Exact
    }

    fn beta(&self) -> T {
        self.beta
    }

    fn sample(&mut self, model: &IsingModel<T>, m: usize, rng: &mut SeededRng) -> Result<SampleSet> {
        sample_exact(model, self.beta, m, self.cap, rng)
    }

    fn moments(&mut self, model: &IsingModel<T>, _m: usize, pairs: &[crate::graph::Edge], _rng: &mut SeededRng) -> Result<Moments<T>> {
        Moments::from_distribution(&model.exact_distribution(self.beta, self.cap)?, pairs)
    }
}

#[derive(Clone, Debug)]
pub struct GibbsSampler<T> {
    pub config: GibbsConfig<T>,
}

impl<T: Real> Sampler<T> for GibbsSampler<T> {
    fn origin(&self) -> SampleOrigin {
        SampleOrigin::Gibbs
    }

    fn beta(&self) -> T {
        self.config.beta
    }

    fn sample(&mut self, model: &IsingModel<T>, m: usize, rng: &mut SeededRng) -> Result<SampleSet> {
        sample_gibbs(model, &self.config, m, rng)
    }
}

#[derive(Clone, Debug)]
pub struct SurrogateSampler<T> {
    pub embedding: Embedding,
    pub hardware: HardwareGraph,
    pub config: GibbsConfig<T>,
}

impl<T: Real> Sampler<T> for SurrogateSampler<T> {
    fn origin(&self) -> SampleOrigin {
        SampleOrigin::AnnealerSurrogate
    }

    fn beta(&self) -> T {
        self.config.beta
    }

    fn sample(&mut self, model: &IsingModel<T>, m: usize, rng: &mut SeededRng) -> Result<SampleSet> {
        sample_annealer_surrogate(model, &self.embedding, &self.hardware, &self.config, m, rng)
    }
}

/// Side of the square Chimera grid the surrogate uses when the logical graph
/// is not a prefix of its own default grid; 16 matches a 2000-qubit device.
pub const SURROGATE_GRID: usize = 16;

/// Hardware for surrogate sampling of `graph`: the default Chimera grid when
/// the graph already lives on its first qubits, otherwise a square grid large
/// enough for a clique layout.
pub fn surrogate_hardware(graph: &LogicalGraph) -> Result<HardwareGraph> {
    let n = graph.n_nodes();
    let native = chimera_hardware(n)?;
    if graph.edges().iter().all(|&(i, j)| native.has_edge(i, j)) {
        return Ok(native);
    }
    let side = SURROGATE_GRID.max(n.div_ceil(4));
    build_chimera(side, side, 4, &[])
}

/// Sampler of the given kind for models on `graph`. The surrogate embeds
/// `graph` into [`surrogate_hardware`] using `rng`.
pub fn build_sampler<T: Real + 'static>(
    kind: SampleOrigin,
    graph: &LogicalGraph,
    gibbs: &GibbsConfig<T>,
    enumeration_cap: usize,
    rng: &mut SeededRng,
) -> Result<Box<dyn Sampler<T>>> {
    gibbs.validate()?;
    match kind {
        SampleOrigin::Exact => {
            if graph.n_nodes() > enumeration_cap {
                return Err(Error::Config(format!(
                    "exact sampling of {} nodes exceeds the enumeration cap of {enumeration_cap}",
                    graph.n_nodes()
                )));
            }
            Ok(Box::new(ExactSampler { beta: gibbs.beta, cap: enumeration_cap }))
        }
        SampleOrigin::Gibbs => Ok(Box::new(GibbsSampler { config: gibbs.clone() })),
        SampleOrigin::AnnealerSurrogate => {
            let hardware = surrogate_hardware(graph)?;
            let embedding = embed(graph, &hardware, &EmbedConfig::default(), rng)?;
            Ok(Box::new(SurrogateSampler { embedding, hardware, config: gibbs.clone() }))
        }
        SampleOrigin::Data => Err(Error::Config("data is not a sampler".into())),
    }
}
