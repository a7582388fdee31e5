//! Network topology: random connected graphs, edge ordering, incidence and
//! Laplacian matrices, and the spectral constants used by the rate bound.
//!
//! Agents are indexed `0..m` in code. Edges are stored once as `(i, j)` with
//! `i < j`, sorted lexicographically; edge `k` has source `i` and destination
//! `j`. All matrices are kept at skeleton size (`n × m` or `m × m`); the lift
//! to `d`-dimensional blocks is applied implicitly by operating on
//! `d`-vectors blockwise.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{sym_eigenvalues, Matrix};

/// Default number of full redraws before [`generate_connected_gnp`] gives up.
pub const DEFAULT_REDRAW_BUDGET: usize = 10_000;

/// Relative threshold below which an eigenvalue counts as zero.
pub const ZERO_EIGEN_RTOL: f64 = 1e-9;

/// An undirected, connected, simple graph with a stable edge order.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    agents: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
    incident: Vec<Vec<Incidence>>,
    redraws: usize,
}

/// One edge seen from one of its endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Incidence {
    pub edge: usize,
    pub neighbor: usize,
    /// `true` when this agent is the edge's source (smaller index).
    pub is_source: bool,
}

impl Topology {
    /// Builds a topology from an arbitrary list of undirected pairs.
    ///
    /// Pairs are normalized to `i < j` and sorted. Self-loops, duplicates,
    /// out-of-range indices and disconnected graphs are rejected.
    pub fn from_edges(agents: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let edges = normalize_edges(agents, pairs)?;
        if !is_connected(agents, &edges) {
            return Err(Error::Disconnected);
        }
        Ok(Self::build(agents, edges, 0))
    }

    pub fn path(agents: usize) -> Result<Self> {
        let pairs: Vec<_> = (1..agents).map(|i| (i - 1, i)).collect();
        Self::from_edges(agents, &pairs)
    }

    pub fn complete(agents: usize) -> Result<Self> {
        let mut pairs = Vec::new();
        for i in 0..agents {
            for j in i + 1..agents {
                pairs.push((i, j));
            }
        }
        Self::from_edges(agents, &pairs)
    }

    pub fn ring(agents: usize) -> Result<Self> {
        let mut pairs: Vec<_> = (1..agents).map(|i| (i - 1, i)).collect();
        if agents > 2 {
            pairs.push((0, agents - 1));
        }
        Self::from_edges(agents, &pairs)
    }

    fn build(agents: usize, edges: Vec<(usize, usize)>, redraws: usize) -> Self {
        let mut neighbors = vec![Vec::new(); agents];
        let mut incident = vec![Vec::new(); agents];
        for (k, &(i, j)) in edges.iter().enumerate() {
            neighbors[i].push(j);
            neighbors[j].push(i);
            incident[i].push(Incidence { edge: k, neighbor: j, is_source: true });
            incident[j].push(Incidence { edge: k, neighbor: i, is_source: false });
        }
        for (list, inc) in neighbors.iter_mut().zip(incident.iter_mut()) {
            list.sort_unstable();
            inc.sort_by_key(|e| e.neighbor);
        }
        Self { agents, edges, neighbors, incident, redraws }
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Neighbors of agent `i` in ascending order.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Incident edges of agent `i`, ordered like [`Topology::neighbors`].
    pub fn incident(&self, i: usize) -> &[Incidence] {
        &self.incident[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn max_degree(&self) -> usize {
        self.neighbors.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Index of edge `{i, j}` if present.
    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        let key = if i < j { (i, j) } else { (j, i) };
        self.edges.binary_search(&key).ok()
    }

    /// Number of full redraws the random generator needed (0 for explicit graphs).
    pub fn redraws(&self) -> usize {
        self.redraws
    }
}

fn normalize_edges(agents: usize, pairs: &[(usize, usize)]) -> Result<Vec<(usize, usize)>> {
    let mut edges = Vec::with_capacity(pairs.len());
    for &(a, b) in pairs {
        if a >= agents || b >= agents {
            return Err(Error::InvalidArgument(format!("edge ({a}, {b}) out of range for {agents} agents")));
        }
        if a == b {
            return Err(Error::InvalidArgument(format!("self-loop at agent {a}")));
        }
        edges.push(if a < b { (a, b) } else { (b, a) });
    }
    edges.sort_unstable();
    if let Some(w) = edges.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument(format!("duplicate edge {:?}", w[0])));
    }
    Ok(edges)
}

/// Breadth-first reachability from agent 0.
pub fn is_connected(agents: usize, edges: &[(usize, usize)]) -> bool {
    if agents == 0 {
        return false;
    }
    let mut adj = vec![Vec::new(); agents];
    for &(i, j) in edges {
        adj[i].push(j);
        adj[j].push(i);
    }
    let mut seen = vec![false; agents];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                queue.push_back(v);
            }
        }
    }
    count == agents
}

/// Draws Erdős–Rényi graphs `G(m, p)` until one is connected.
///
/// Every attempt resamples the whole edge set. The stream is a function of
/// `seed` only, so the result is reproducible.
pub fn generate_connected_gnp(agents: usize, probability: f64, seed: u64, max_attempts: usize) -> Result<Topology> {
    if agents < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 agents, got {agents}")));
    }
    if !(probability > 0.0 && probability <= 1.0) {
        return Err(Error::InvalidArgument(format!("edge probability must lie in (0, 1], got {probability}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 0..max_attempts {
        let mut edges = Vec::new();
        for i in 0..agents {
            for j in i + 1..agents {
                if rng.random_bool(probability) {
                    edges.push((i, j));
                }
            }
        }
        if is_connected(agents, &edges) {
            return Ok(Topology::build(agents, edges, attempt));
        }
    }
    Err(Error::ConnectivityBudget { agents, probability, attempts: max_attempts })
}

/// Source/destination selectors and the derived incidence and Laplacian
/// matrices, all at skeleton size.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceSet {
    /// `n × m`, row `k` has a one in the source column of edge `k`.
    pub a_s: Matrix,
    /// `n × m`, row `k` has a one in the destination column of edge `k`.
    pub a_d: Matrix,
    /// Signed incidence `A_s − A_d`.
    pub e_s: Matrix,
    /// Unsigned incidence `A_s + A_d`.
    pub e_u: Matrix,
    /// Signed Laplacian `E_sᵀE_s`.
    pub l_s: Matrix,
    /// Unsigned Laplacian `E_uᵀE_u`.
    pub l_u: Matrix,
    pub degrees: Vec<usize>,
}

impl IncidenceSet {
    /// Builds the matrices for any edge list with `i != j`; connectivity is
    /// not required here.
    pub fn from_edges(agents: usize, edges: &[(usize, usize)]) -> Self {
        let n = edges.len();
        let mut a_s = Matrix::zeros(n, agents);
        let mut a_d = Matrix::zeros(n, agents);
        let mut degrees = vec![0; agents];
        for (k, &(i, j)) in edges.iter().enumerate() {
            a_s[(k, i)] = 1.0;
            a_d[(k, j)] = 1.0;
            degrees[i] += 1;
            degrees[j] += 1;
        }
        let e_s = &a_s - &a_d;
        let e_u = &a_s + &a_d;
        let l_s = e_s.transpose() * &e_s;
        let l_u = e_u.transpose() * &e_u;
        Self { a_s, a_d, e_s, e_u, l_s, l_u, degrees }
    }

    pub fn agents(&self) -> usize {
        self.a_s.ncols()
    }

    pub fn edge_count(&self) -> usize {
        self.a_s.nrows()
    }

    pub fn degree_matrix(&self) -> Matrix {
        let diag: Vec<f64> = self.degrees.iter().map(|&d| d as f64).collect();
        Matrix::from_diagonal(&nalgebra::DVector::from_vec(diag))
    }
}

pub fn build_incidence(topology: &Topology) -> IncidenceSet {
    IncidenceSet::from_edges(topology.agents(), topology.edges())
}

/// Spectral quantities entering the contraction coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralConstants {
    /// Largest eigenvalue of `L_u`.
    pub sigma_max_lu: f64,
    /// Smallest eigenvalue of `L_u` (zero for bipartite graphs).
    pub sigma_min_lu: f64,
    /// Smallest positive eigenvalue of `[E_s; Sᵀ][E_sᵀ, S]`.
    pub sigma_min_plus: f64,
}

/// The `(n+1) × (n+1)` Gram matrix `[E_s; s_lᵀ][E_sᵀ, s_l]` on the skeleton.
pub fn stacked_gram(inc: &IncidenceSet, selector: usize) -> Matrix {
    let n = inc.edge_count();
    let m = inc.agents();
    let mut stacked = Matrix::zeros(n + 1, m);
    stacked.rows_mut(0, n).copy_from(&inc.e_s);
    stacked[(n, selector)] = 1.0;
    &stacked * stacked.transpose()
}

pub fn spectral_constants(inc: &IncidenceSet, selector: usize) -> Result<SpectralConstants> {
    let m = inc.agents();
    if selector >= m {
        return Err(Error::InvalidArgument(format!("selector agent {selector} out of range for {m} agents")));
    }
    let lu = sym_eigenvalues(&inc.l_u);
    let sigma_max_lu = lu.last().copied().unwrap_or(0.0);
    let sigma_min_lu = lu.first().copied().unwrap_or(0.0).max(0.0);

    let gram = sym_eigenvalues(&stacked_gram(inc, selector));
    let top = gram.last().copied().unwrap_or(0.0);
    let threshold = ZERO_EIGEN_RTOL * top;
    // The stacked operator has rank m exactly when the graph is connected.
    let positive: Vec<f64> = gram.into_iter().filter(|&v| v > threshold).collect();
    if top <= 0.0 || positive.len() < m {
        return Err(Error::Disconnected);
    }
    Ok(SpectralConstants { sigma_max_lu, sigma_min_lu, sigma_min_plus: positive[0] })
}
