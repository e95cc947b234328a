//! Logical and hardware graphs, and minor embedding between them.

mod embed;

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use crate::{Error, Result};

pub use embed::{decode_majority, embed, EmbedConfig, Embedding, DEFAULT_CHAIN_STRENGTH};

/// Unordered node pair, always stored with the smaller id first.
pub type Edge = (usize, usize);

fn normalize(i: usize, j: usize) -> Edge {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

/// Undirected simple graph over nodes `0..n_nodes`.
///
/// Edges are kept sorted, so two graphs with the same edge set compare equal
/// and edge indices are stable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LogicalGraph {
    n_nodes: usize,
    edges: Vec<Edge>,
}

impl LogicalGraph {
    pub fn new(n_nodes: usize, edges: impl IntoIterator<Item = Edge>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i == j {
                return Err(Error::InvalidInput(format!("self-loop on node {i}")));
            }
            for id in [i, j] {
                if id >= n_nodes {
                    return Err(Error::InvalidId {
                        id,
                        context: format!("graph has {n_nodes} nodes"),
                    });
                }
            }
            if !set.insert(normalize(i, j)) {
                return Err(Error::InvalidInput(format!("duplicate edge ({i}, {j})")));
            }
        }
        Ok(Self { n_nodes, edges: set.into_iter().collect() })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Position of edge `(i, j)` in [`edges`](Self::edges).
    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        self.edges.binary_search(&normalize(i, j)).ok()
    }

    pub fn contains_edge(&self, i: usize, j: usize) -> bool {
        self.edge_index(i, j).is_some()
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        adjacency(self.n_nodes, &self.edges)
    }

    /// Two-colouring of the graph, if it is bipartite.
    pub fn bipartition(&self) -> Option<Vec<u8>> {
        two_colour(self.n_nodes, &self.adjacency())
    }

    /// Plain-text edge list: `n_nodes` on the first line, then `i j` per edge.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("{}\n", self.n_nodes);
        for (i, j) in &self.edges {
            let _ = writeln!(out, "{i} {j}");
        }
        out
    }

    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| Error::format("n_nodes", "empty edge list"))?;
        let n_nodes = header
            .parse()
            .map_err(|_| Error::format("n_nodes", format!("not a count: {header:?}")))?;
        let mut edges = Vec::new();
        for (k, line) in lines.enumerate() {
            let mut it = line.split_whitespace();
            let mut field = |name: &str| -> Result<usize> {
                it.next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::format(format!("edge {k}"), format!("missing {name}: {line:?}")))
            };
            edges.push((field("i")?, field("j")?));
        }
        Self::new(n_nodes, edges)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_edge_list()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_edge_list(&text)
    }
}

fn adjacency(n: usize, edges: &[Edge]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for &(i, j) in edges {
        adj[i].push(j);
        adj[j].push(i);
    }
    adj
}

fn two_colour(n: usize, adj: &[Vec<usize>]) -> Option<Vec<u8>> {
    let mut colour = vec![u8::MAX; n];
    let mut queue = VecDeque::new();
    for start in 0..n {
        if colour[start] != u8::MAX {
            continue;
        }
        colour[start] = 0;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            for &u in &adj[v] {
                if colour[u] == u8::MAX {
                    colour[u] = 1 - colour[v];
                    queue.push_back(u);
                } else if colour[u] == colour[v] {
                    return None;
                }
            }
        }
    }
    Some(colour)
}

/// Complete graph `K_n`.
pub fn build_complete(n: usize) -> Result<LogicalGraph> {
    if n == 0 {
        return Err(Error::InvalidSize("complete graph needs at least one node".into()));
    }
    LogicalGraph::new(n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))))
}

/// Complete bipartite graph `K_{n_a,n_b}`; part A is `0..n_a`, part B the rest.
pub fn build_bipartite(n_a: usize, n_b: usize) -> Result<LogicalGraph> {
    if n_a == 0 || n_b == 0 {
        return Err(Error::InvalidSize(format!("bipartite parts must be non-empty, got ({n_a}, {n_b})")));
    }
    LogicalGraph::new(n_a + n_b, (0..n_a).flat_map(|i| (n_a..n_a + n_b).map(move |j| (i, j))))
}

/// Grid dimensions of a Chimera graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChimeraShape {
    pub rows: usize,
    pub cols: usize,
    pub shore: usize,
}

impl ChimeraShape {
    pub fn n_qubits(&self) -> usize {
        2 * self.rows * self.cols * self.shore
    }

    /// Linear index of qubit `k` on `side` (0 vertical, 1 horizontal) of
    /// cell `(row, col)`.
    pub fn qubit(&self, row: usize, col: usize, side: usize, k: usize) -> usize {
        ((row * self.cols + col) * 2 + side) * self.shore + k
    }

    /// Smallest grid reached from `self` by alternately adding a column and a
    /// row until it has at least `n` qubits.
    pub fn grown_to(mut self, n: usize) -> Self {
        let mut add_col = true;
        while self.n_qubits() < n {
            if add_col {
                self.cols += 1;
            } else {
                self.rows += 1;
            }
            add_col = !add_col;
        }
        self
    }
}

/// Annealer connectivity: usable couplers plus the removed dead elements.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HardwareGraph {
    n_qubits: usize,
    edges: Vec<Edge>,
    dead_qubits: BTreeSet<usize>,
    dead_couplers: BTreeSet<Edge>,
    shape: Option<ChimeraShape>,
}

impl HardwareGraph {
    /// Hardware graph from an explicit coupler list. Couplers touching a dead
    /// qubit, or listed as dead, are dropped.
    pub fn new(
        n_qubits: usize,
        edges: impl IntoIterator<Item = Edge>,
        dead_qubits: impl IntoIterator<Item = usize>,
        dead_couplers: impl IntoIterator<Item = Edge>,
    ) -> Result<Self> {
        let dead_qubits: BTreeSet<usize> = dead_qubits.into_iter().collect();
        if let Some(&q) = dead_qubits.iter().find(|&&q| q >= n_qubits) {
            return Err(Error::InvalidId { id: q, context: format!("hardware has {n_qubits} qubits") });
        }
        let dead_couplers: BTreeSet<Edge> = dead_couplers.into_iter().map(|(i, j)| normalize(i, j)).collect();
        let all = LogicalGraph::new(n_qubits, edges)?;
        for &(i, j) in &dead_couplers {
            if !all.contains_edge(i, j) {
                return Err(Error::InvalidId { id: j, context: format!("dead coupler ({i}, {j}) is not a coupler") });
            }
        }
        let edges = all
            .edges
            .into_iter()
            .filter(|&(i, j)| !dead_qubits.contains(&i) && !dead_qubits.contains(&j) && !dead_couplers.contains(&(i, j)))
            .collect();
        Ok(Self { n_qubits, edges, dead_qubits, dead_couplers, shape: None })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    /// Usable couplers only.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn dead_qubits(&self) -> &BTreeSet<usize> {
        &self.dead_qubits
    }

    pub fn dead_couplers(&self) -> &BTreeSet<Edge> {
        &self.dead_couplers
    }

    pub fn shape(&self) -> Option<ChimeraShape> {
        self.shape
    }

    pub fn is_usable(&self, q: usize) -> bool {
        q < self.n_qubits && !self.dead_qubits.contains(&q)
    }

    pub fn usable_qubits(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_qubits).filter(|&q| self.is_usable(q))
    }

    pub fn n_usable(&self) -> usize {
        self.n_qubits - self.dead_qubits.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.binary_search(&normalize(i, j)).is_ok()
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        adjacency(self.n_qubits, &self.edges)
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency().iter().map(Vec::len).max().unwrap_or(0)
    }

    /// The usable part as a logical graph over all qubit ids.
    pub fn as_logical(&self) -> LogicalGraph {
        LogicalGraph { n_nodes: self.n_qubits, edges: self.edges.clone() }
    }

    /// Induced subgraph on the first `n` usable qubits, relabelled `0..n`.
    /// Returns the graph and the qubit behind each logical node.
    pub fn induced_prefix(&self, n: usize) -> Result<(LogicalGraph, Vec<usize>)> {
        let qubits: Vec<usize> = self.usable_qubits().take(n).collect();
        if qubits.len() < n {
            return Err(Error::InvalidSize(format!(
                "need {n} usable qubits, hardware has {}",
                qubits.len()
            )));
        }
        let mut label = vec![usize::MAX; self.n_qubits];
        for (node, &q) in qubits.iter().enumerate() {
            label[q] = node;
        }
        let edges = self
            .edges
            .iter()
            .filter(|&&(i, j)| label[i] != usize::MAX && label[j] != usize::MAX)
            .map(|&(i, j)| (label[i], label[j]));
        Ok((LogicalGraph::new(n, edges)?, qubits))
    }

    pub fn to_edge_list(&self) -> String {
        self.as_logical().to_edge_list()
    }
}

/// Chimera graph of `rows × cols` unit cells, each a complete bipartite
/// `K_{shore,shore}`. Side-0 qubits couple to the same index in the cells
/// above and below, side-1 qubits to the cells left and right.
pub fn build_chimera(rows: usize, cols: usize, shore: usize, dead: &[usize]) -> Result<HardwareGraph> {
    if rows == 0 || cols == 0 || shore == 0 {
        return Err(Error::InvalidSize(format!("chimera grid {rows}x{cols} with shore {shore}")));
    }
    let shape = ChimeraShape { rows, cols, shore };
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            for a in 0..shore {
                for b in 0..shore {
                    edges.push((shape.qubit(r, c, 0, a), shape.qubit(r, c, 1, b)));
                }
                if r + 1 < rows {
                    edges.push((shape.qubit(r, c, 0, a), shape.qubit(r + 1, c, 0, a)));
                }
                if c + 1 < cols {
                    edges.push((shape.qubit(r, c, 1, a), shape.qubit(r, c + 1, 1, a)));
                }
            }
        }
    }
    let mut graph = HardwareGraph::new(shape.n_qubits(), edges, dead.iter().copied(), [])?;
    graph.shape = Some(shape);
    Ok(graph)
}

/// Latent-space topologies compared in the experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Topology {
    Complete,
    Bipartite,
    Chimera,
}

impl Topology {
    pub const ALL: [Topology; 3] = [Topology::Complete, Topology::Bipartite, Topology::Chimera];

    pub fn name(self) -> &'static str {
        match self {
            Topology::Complete => "complete",
            Topology::Bipartite => "bipartite",
            Topology::Chimera => "chimera",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "complete" => Ok(Topology::Complete),
            "bipartite" | "restricted" => Ok(Topology::Bipartite),
            "chimera" | "sparse" => Ok(Topology::Chimera),
            other => Err(Error::Config(format!("unknown topology {other:?}"))),
        }
    }

    /// Logical graph on `n` nodes. Bipartite splits the nodes into halves
    /// (the first part gets the extra node when `n` is odd). Chimera takes the
    /// first `n` qubits of `chimera_hardware(n)`.
    pub fn build(self, n: usize) -> Result<LogicalGraph> {
        match self {
            Topology::Complete => build_complete(n),
            Topology::Bipartite => {
                if n < 2 {
                    return Err(Error::InvalidSize("bipartite topology needs at least two nodes".into()));
                }
                build_bipartite(n - n / 2, n / 2)
            }
            Topology::Chimera => Ok(chimera_hardware(n)?.induced_prefix(n)?.0),
        }
    }
}

/// Default Chimera grid for `n` logical variables: a 2x2 grid of shore-4
/// cells, grown until it holds `n` qubits.
pub fn chimera_hardware(n: usize) -> Result<HardwareGraph> {
    let shape = ChimeraShape { rows: 2, cols: 2, shore: 4 }.grown_to(n);
    build_chimera(shape.rows, shape.cols, shape.shore, &[])
}
