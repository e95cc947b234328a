use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;

use super::{HardwareGraph, LogicalGraph};
use crate::{Error, Result};

/// Chain coupling in hardware convention (`E = Σ h s + Σ J s s`), where
/// negative couplings are ferromagnetic. `-1` is the strongest lock on the
/// normalised scale.
pub const DEFAULT_CHAIN_STRENGTH: f64 = -1.0;

/// Map from each logical node to the qubits ("chain") that represent it.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    chains: Vec<Vec<usize>>,
    chain_strength: f64,
}

impl Embedding {
    pub fn new(chains: Vec<Vec<usize>>, chain_strength: f64) -> Self {
        let chains = chains
            .into_iter()
            .map(|mut c| {
                c.sort_unstable();
                c
            })
            .collect();
        Self { chains, chain_strength }
    }

    /// Node `i` on qubit `qubits[i]`.
    pub fn from_assignment(qubits: &[usize], chain_strength: f64) -> Self {
        Self::new(qubits.iter().map(|&q| vec![q]).collect(), chain_strength)
    }

    pub fn chains(&self) -> &[Vec<usize>] {
        &self.chains
    }

    pub fn chain(&self, node: usize) -> &[usize] {
        &self.chains[node]
    }

    /// Chain coupling in hardware convention.
    pub fn chain_strength(&self) -> f64 {
        self.chain_strength
    }

    /// Chain coupling in the internal convention (`E = -Σ h z - Σ J z z`,
    /// ferromagnetic positive).
    pub fn chain_coupling(&self) -> f64 {
        -self.chain_strength
    }

    pub fn n_qubits_used(&self) -> usize {
        self.chains.iter().map(Vec::len).sum()
    }

    pub fn max_chain_len(&self) -> usize {
        self.chains.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Checks that chains are non-empty, use usable qubits, are pairwise
    /// disjoint and connected, and that every logical edge is realised by at
    /// least one hardware coupler.
    pub fn validate(&self, logical: &LogicalGraph, hardware: &HardwareGraph) -> Result<()> {
        let n = logical.n_nodes();
        if self.chains.len() != n {
            return Err(Error::InvalidEmbedding(format!("{} chains for {n} logical nodes", self.chains.len())));
        }
        let mut owner = vec![usize::MAX; hardware.n_qubits()];
        for (v, chain) in self.chains.iter().enumerate() {
            if chain.is_empty() {
                return Err(Error::InvalidEmbedding(format!("chain of node {v} is empty")));
            }
            for &q in chain {
                if !hardware.is_usable(q) {
                    return Err(Error::InvalidEmbedding(format!("node {v} uses unusable qubit {q}")));
                }
                if owner[q] != usize::MAX {
                    return Err(Error::InvalidEmbedding(format!("qubit {q} shared by nodes {} and {v}", owner[q])));
                }
                owner[q] = v;
            }
        }
        let adj = hardware.adjacency();
        for (v, chain) in self.chains.iter().enumerate() {
            let mut seen = vec![chain[0]];
            let mut stack = vec![chain[0]];
            while let Some(q) = stack.pop() {
                for &p in &adj[q] {
                    if owner[p] == v && !seen.contains(&p) {
                        seen.push(p);
                        stack.push(p);
                    }
                }
            }
            if seen.len() != chain.len() {
                return Err(Error::InvalidEmbedding(format!("chain of node {v} is disconnected")));
            }
        }
        for &(i, j) in logical.edges() {
            let covered = self.chains[i].iter().any(|&q| adj[q].iter().any(|&p| owner[p] == j));
            if !covered {
                return Err(Error::InvalidEmbedding(format!("logical edge ({i}, {j}) has no coupler")));
            }
        }
        Ok(())
    }

    /// One hardware coupler joining the chains of `i` and `j`.
    pub fn coupler(&self, i: usize, j: usize, hardware: &HardwareGraph) -> Option<(usize, usize)> {
        self.chains[i]
            .iter()
            .flat_map(|&a| self.chains[j].iter().map(move |&b| (a, b)))
            .find(|&(a, b)| hardware.has_edge(a, b))
    }
}

#[derive(Clone, Debug)]
pub struct EmbedConfig {
    /// Independent attempts, each from a fresh random node order.
    pub restarts: usize,
    /// Rip-up-and-reroute passes per attempt.
    pub rounds: usize,
    pub chain_strength: f64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self { restarts: 10, rounds: 40, chain_strength: DEFAULT_CHAIN_STRENGTH }
    }
}

/// Minor embedding of `logical` into `hardware`.
///
/// If node `i → qubit i` already realises the graph it is returned as is.
/// On Chimera hardware the clique layout of [`embed_clique`] is tried next,
/// since it realises any graph with few enough nodes. Otherwise, or if dead
/// qubits block every clique placement, a heuristic grows chains: each
/// node in turn is (re)placed at the qubit minimising the summed weighted
/// distance to its placed neighbours' chains, and the chain is grown along
/// the shortest paths. Qubit weights grow exponentially with
/// how many chains already use the qubit, the penalty base grows every
/// round, and qubits that stay overused accumulate a history cost, so
/// overlaps are squeezed out over successive rounds.
pub fn embed<R: Rng + ?Sized>(
    logical: &LogicalGraph,
    hardware: &HardwareGraph,
    config: &EmbedConfig,
    rng: &mut R,
) -> Result<Embedding> {
    let n = logical.n_nodes();
    if n > hardware.n_usable() {
        return Err(Error::EmbeddingFailure(format!(
            "{n} logical nodes but only {} usable qubits",
            hardware.n_usable()
        )));
    }
    let identity = n <= hardware.n_qubits()
        && (0..n).all(|q| hardware.is_usable(q))
        && logical.edges().iter().all(|&(i, j)| hardware.has_edge(i, j));
    if identity {
        let chains = (0..n).map(|q| vec![q]).collect();
        return Ok(Embedding::new(chains, config.chain_strength));
    }
    if let Some(embedding) = embed_clique(logical, hardware, config.chain_strength) {
        return Ok(embedding);
    }

    let mut search = ChainSearch::new(logical, hardware);
    for _ in 0..config.restarts.max(1) {
        if let Some(chains) = search.attempt(config.rounds.max(1), rng) {
            let embedding = Embedding::new(chains, config.chain_strength);
            if embedding.validate(logical, hardware).is_ok() {
                return Ok(embedding);
            }
        }
    }
    Err(Error::EmbeddingFailure(format!(
        "{n}-node graph with {} edges not embedded after {} restarts",
        logical.n_edges(),
        config.restarts
    )))
}

/// Clique layout on a Chimera grid.
///
/// In an `m × m` block, slot `(b, k)` takes horizontal qubit `k` of cells
/// `(b, 0..=b)` and vertical qubit `k` of cells `(b..m, b)`. The two arms meet
/// in cell `(b, b)`, and slots `(b, k)`, `(b', k')` with `b ≤ b'` touch in cell
/// `(b', b)`, so the `shore · m` slots form a complete graph with chains of
/// length `m + 1`. Blocks are tried smallest first at every offset, and slots
/// touching dead qubits are skipped. Returns `None` when no placement works
/// or the hardware is not a Chimera grid.
pub fn embed_clique(logical: &LogicalGraph, hardware: &HardwareGraph, chain_strength: f64) -> Option<Embedding> {
    let shape = hardware.shape()?;
    let n = logical.n_nodes();
    let smallest = n.div_ceil(shape.shore).max(1);
    for m in smallest..=shape.rows.min(shape.cols) {
        for r0 in 0..=shape.rows - m {
            for c0 in 0..=shape.cols - m {
                let mut chains = Vec::with_capacity(n);
                for b in 0..m {
                    for k in 0..shape.shore {
                        if chains.len() == n {
                            break;
                        }
                        let chain: Vec<usize> = (0..=b)
                            .map(|c| shape.qubit(r0 + b, c0 + c, 1, k))
                            .chain((b..m).map(|r| shape.qubit(r0 + r, c0 + b, 0, k)))
                            .collect();
                        if chain.iter().all(|&q| hardware.is_usable(q)) {
                            chains.push(chain);
                        }
                    }
                }
                if chains.len() < n {
                    continue;
                }
                let embedding = Embedding::new(chains, chain_strength);
                if embedding.validate(logical, hardware).is_ok() {
                    return Some(embedding);
                }
            }
        }
    }
    None
}

struct ChainSearch {
    logical_adj: Vec<Vec<usize>>,
    hw_adj: Vec<Vec<usize>>,
    usable: Vec<bool>,
    usage: Vec<u32>,
    /// Accumulated overuse per qubit, so persistent hot spots get dearer
    /// every round until some chain routes around them.
    history: Vec<f64>,
    chains: Vec<Vec<usize>>,
}

#[derive(PartialEq)]
struct Frontier {
    cost: f64,
    qubit: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other.cost.total_cmp(&self.cost).then_with(|| other.qubit.cmp(&self.qubit))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl ChainSearch {
    fn new(logical: &LogicalGraph, hardware: &HardwareGraph) -> Self {
        let n_q = hardware.n_qubits();
        Self {
            logical_adj: logical.adjacency(),
            hw_adj: hardware.adjacency(),
            usable: (0..n_q).map(|q| hardware.is_usable(q)).collect(),
            usage: vec![0; n_q],
            history: vec![0.0; n_q],
            chains: vec![Vec::new(); logical.n_nodes()],
        }
    }

    fn attempt<R: Rng + ?Sized>(&mut self, rounds: usize, rng: &mut R) -> Option<Vec<Vec<usize>>> {
        self.usage.iter_mut().for_each(|u| *u = 0);
        self.history.iter_mut().for_each(|h| *h = 0.0);
        self.chains.iter_mut().for_each(Vec::clear);
        let mut order = self.bfs_order(rng);
        let mut penalty = (self.usable.iter().filter(|&&u| u).count() as f64).max(2.0);
        for round in 0..rounds {
            if round > 0 {
                order.shuffle(rng);
            }
            for &v in &order {
                self.place(v, penalty, rng);
            }
            if self.usage.iter().all(|&u| u <= 1) {
                return Some(self.chains.clone());
            }
            for (h, &u) in self.history.iter_mut().zip(&self.usage) {
                if u > 1 {
                    *h += f64::from(u - 1);
                }
            }
            penalty = (penalty * 1.5).min(1e12);
        }
        None
    }

    fn bfs_order<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let n = self.logical_adj.len();
        let mut starts: Vec<usize> = (0..n).collect();
        starts.shuffle(rng);
        let mut seen = vec![false; n];
        let mut order = Vec::with_capacity(n);
        for s in starts {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut queue = VecDeque::from([s]);
            while let Some(v) = queue.pop_front() {
                order.push(v);
                let mut next: Vec<usize> = self.logical_adj[v].iter().copied().filter(|&u| !seen[u]).collect();
                next.shuffle(rng);
                for u in next {
                    seen[u] = true;
                    queue.push_back(u);
                }
            }
        }
        order
    }

    fn weight(&self, q: usize, penalty: f64) -> f64 {
        (1.0 + self.history[q]) * penalty.powi(self.usage[q] as i32)
    }

    fn place<R: Rng + ?Sized>(&mut self, v: usize, penalty: f64, rng: &mut R) {
        for &q in &self.chains[v] {
            self.usage[q] -= 1;
        }
        self.chains[v].clear();

        let placed: Vec<usize> = self.logical_adj[v].iter().copied().filter(|&u| !self.chains[u].is_empty()).collect();
        let n_q = self.usage.len();
        if placed.is_empty() {
            let min_use = (0..n_q).filter(|&q| self.usable[q]).map(|q| self.usage[q]).min().unwrap_or(0);
            let candidates: Vec<usize> = (0..n_q).filter(|&q| self.usable[q] && self.usage[q] == min_use).collect();
            let root = candidates[rng.random_range(0..candidates.len())];
            self.chains[v].push(root);
            self.usage[root] += 1;
            return;
        }

        let trees: Vec<(Vec<f64>, Vec<usize>)> = placed.iter().map(|&u| self.distances_from(u, penalty)).collect();
        let mut best = f64::INFINITY;
        let mut roots = Vec::new();
        for q in 0..n_q {
            if !self.usable[q] {
                continue;
            }
            let mut total = 0.0;
            for (dist, _) in &trees {
                total += dist[q];
            }
            // the root weight appears once in every path sum
            total -= (trees.len() as f64 - 1.0) * self.weight(q, penalty);
            if total < best - 1e-12 {
                best = total;
                roots.clear();
                roots.push(q);
            } else if (total - best).abs() <= 1e-12 {
                roots.push(q);
            }
        }
        if roots.is_empty() {
            return;
        }
        let root = roots[rng.random_range(0..roots.len())];
        let mut chain = vec![root];
        for (k, &u) in placed.iter().enumerate() {
            let (_, parent) = &trees[k];
            let mut q = root;
            loop {
                let p = parent[q];
                if p == usize::MAX || self.chains[u].contains(&p) {
                    break;
                }
                if !chain.contains(&p) {
                    chain.push(p);
                }
                q = p;
            }
        }
        for &q in &chain {
            self.usage[q] += 1;
        }
        self.chains[v] = chain;
    }

    /// Dijkstra from the chain of `u`, where entering a qubit costs its
    /// weight. Qubits in the chain itself cost their (overlap) weight as a
    /// root. `parent` points back towards the chain.
    fn distances_from(&self, u: usize, penalty: f64) -> (Vec<f64>, Vec<usize>) {
        let n_q = self.usage.len();
        let mut dist = vec![f64::INFINITY; n_q];
        let mut parent = vec![usize::MAX; n_q];
        let mut heap = BinaryHeap::new();
        for &q in &self.chains[u] {
            dist[q] = 0.0;
            heap.push(Frontier { cost: 0.0, qubit: q });
        }
        while let Some(Frontier { cost, qubit }) = heap.pop() {
            if cost > dist[qubit] {
                continue;
            }
            for &p in &self.hw_adj[qubit] {
                if !self.usable[p] {
                    continue;
                }
                let c = cost + self.weight(p, penalty);
                if c < dist[p] {
                    dist[p] = c;
                    parent[p] = qubit;
                    heap.push(Frontier { cost: c, qubit: p });
                }
            }
        }
        for &q in &self.chains[u] {
            dist[q] = self.weight(q, penalty);
        }
        (dist, parent)
    }
}

/// Majority vote over a chain's qubit spins; an exact tie is broken by a
/// fair coin.
pub fn decode_majority<R: Rng + ?Sized>(chain_states: &[i8], rng: &mut R) -> Result<i8> {
    if chain_states.is_empty() {
        return Err(Error::InvalidInput("cannot decode an empty chain".into()));
    }
    let sum: i32 = chain_states.iter().map(|&s| i32::from(s)).sum();
    Ok(match sum.cmp(&0) {
        Ordering::Greater => 1,
        Ordering::Less => -1,
        Ordering::Equal => {
            if rng.random::<bool>() {
                1
            } else {
                -1
            }
        }
    })
}
