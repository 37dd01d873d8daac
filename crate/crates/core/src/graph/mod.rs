//! Attributed graph storage, adjacency normalization, neighborhoods and
//! induced subgraphs.

mod bundle;
mod sbm;

use std::collections::{HashMap, VecDeque};

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

pub use bundle::{
    convert_linqs, ingest_bundle, load_citation_bundle, write_bundle, write_id_map, IdMap,
};
pub use sbm::{generate_sbm, SbmParams};

/// Node ids of the three evaluation splits. Nodes listed in none of them are
/// simply unassigned.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    pub fn is_empty(&self) -> bool {
        self.train.is_empty() && self.val.is_empty() && self.test.is_empty()
    }
}

/// Immutable undirected attributed graph.
///
/// Edges are stored once as `(a, b)` with `a < b`, sorted. Adjacency is kept
/// in compressed sparse row form for neighbor lookups.
#[derive(Debug, Clone)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    features: Array2<f64>,
    labels: Vec<usize>,
    num_classes: usize,
    splits: Splits,
}

impl Graph {
    /// Builds a graph, dropping self-loops and duplicate undirected pairs.
    pub fn new(
        num_nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: Array2<f64>,
        labels: Vec<usize>,
        splits: Splits,
    ) -> Result<Self> {
        if features.nrows() != num_nodes {
            return Err(Error::Format(format!(
                "feature matrix has {} rows for {} nodes",
                features.nrows(),
                num_nodes
            )));
        }
        if labels.len() != num_nodes {
            return Err(Error::Format(format!(
                "{} labels for {} nodes",
                labels.len(),
                num_nodes
            )));
        }
        if let Some(bad) = features.iter().find(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("feature value {bad}")));
        }

        let mut pairs = Vec::new();
        for (a, b) in edges {
            for v in [a, b] {
                if v >= num_nodes {
                    return Err(Error::Range {
                        what: "edge endpoint",
                        value: v,
                        limit: num_nodes,
                    });
                }
            }
            if a != b {
                pairs.push((a.min(b), a.max(b)));
            }
        }
        pairs.sort_unstable();
        pairs.dedup();

        let mut seen = vec![false; num_nodes];
        for (name, ids) in [
            ("train", &splits.train),
            ("val", &splits.val),
            ("test", &splits.test),
        ] {
            for &id in ids {
                if id >= num_nodes {
                    return Err(Error::Range {
                        what: "split node id",
                        value: id,
                        limit: num_nodes,
                    });
                }
                if seen[id] {
                    return Err(Error::Format(format!(
                        "node {id} appears in more than one split (seen again in {name})"
                    )));
                }
                seen[id] = true;
            }
        }

        let num_classes = labels.iter().max().map_or(0, |&m| m + 1);

        let mut degree = vec![0usize; num_nodes];
        for &(a, b) in &pairs {
            degree[a] += 1;
            degree[b] += 1;
        }
        let mut offsets = Vec::with_capacity(num_nodes + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..num_nodes].to_vec();
        let mut neighbors = vec![0usize; pairs.len() * 2];
        for &(a, b) in &pairs {
            neighbors[fill[a]] = b;
            fill[a] += 1;
            neighbors[fill[b]] = a;
            fill[b] += 1;
        }
        for v in 0..num_nodes {
            neighbors[offsets[v]..offsets[v + 1]].sort_unstable();
        }

        Ok(Self {
            num_nodes,
            edges: pairs,
            offsets,
            neighbors,
            features,
            labels,
            num_classes,
            splits,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Undirected edges as `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.neighbors(a).binary_search(&b).is_ok()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn splits(&self) -> &Splits {
        &self.splits
    }

    /// Same graph with a different split assignment.
    pub fn with_splits(mut self, splits: Splits) -> Result<Self> {
        let edges = std::mem::take(&mut self.edges);
        Graph::new(self.num_nodes, edges, self.features, self.labels, splits)
    }
}

/// Symmetrically normalized adjacency `D^-1/2 (A + I) D^-1/2` of a small
/// (sub)graph, stored dense.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdj {
    values: Array2<f64>,
}

impl NormalizedAdj {
    pub fn size(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// Normalizes the adjacency of an `n`-node graph given by an undirected
    /// edge list over local ids.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adj = Array2::<f64>::zeros((n, n));
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::Range {
                    what: "local edge endpoint",
                    value: a.max(b),
                    limit: n,
                });
            }
            if a != b {
                adj[[a, b]] = 1.0;
                adj[[b, a]] = 1.0;
            }
        }
        normalize_adjacency(adj.view())
    }
}

/// Returns `D^-1/2 (adj + I) D^-1/2` where `D` is the degree matrix of
/// `adj + I`. The input must be square, symmetric and have a zero diagonal.
pub fn normalize_adjacency(adj: ArrayView2<'_, f64>) -> Result<NormalizedAdj> {
    let n = adj.nrows();
    if adj.ncols() != n {
        return Err(Error::Contract(format!(
            "adjacency must be square, got {}x{}",
            n,
            adj.ncols()
        )));
    }
    for i in 0..n {
        if adj[[i, i]] != 0.0 {
            return Err(Error::Contract(format!("nonzero diagonal at {i}")));
        }
        for j in (i + 1)..n {
            if adj[[i, j]] != adj[[j, i]] {
                return Err(Error::Contract(format!(
                    "adjacency not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| 1.0 / (1.0 + adj.row(i).sum()).sqrt())
        .collect();
    let mut values = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let a = if i == j { 1.0 } else { adj[[i, j]] };
            if a != 0.0 {
                values[[i, j]] = inv_sqrt[i] * a * inv_sqrt[j];
            }
        }
    }
    Ok(NormalizedAdj { values })
}

/// All nodes within shortest-path distance `k` of `v`, including `v`, sorted.
pub fn k_hop_neighbors(graph: &Graph, v: usize, k: usize) -> Vec<usize> {
    let mut dist: HashMap<usize, usize> = HashMap::new();
    dist.insert(v, 0);
    let mut queue = VecDeque::from([v]);
    while let Some(u) = queue.pop_front() {
        let du = dist[&u];
        if du == k {
            continue;
        }
        for &w in graph.neighbors(u) {
            if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(w) {
                e.insert(du + 1);
                queue.push_back(w);
            }
        }
    }
    let mut out: Vec<usize> = dist.into_keys().collect();
    out.sort_unstable();
    out
}

/// Induced subgraph around an anchor, re-indexed locally.
#[derive(Debug, Clone)]
pub struct SubgraphView {
    pub anchor: usize,
    pub local_to_global: Vec<usize>,
    /// Local undirected edges `(a, b)`, `a < b`, sorted.
    pub local_edges: Vec<(usize, usize)>,
    pub norm_adj: NormalizedAdj,
    pub features: Array2<f64>,
}

impl SubgraphView {
    pub fn len(&self) -> usize {
        self.local_to_global.len()
    }

    pub fn is_empty(&self) -> bool {
        self.local_to_global.is_empty()
    }
}

/// Subgraph induced by `vertices` (duplicates ignored, first occurrence order
/// kept). Every global edge between two retained vertices is kept.
pub fn induced_subgraph(graph: &Graph, vertices: &[usize], anchor: usize) -> Result<SubgraphView> {
    let mut local_to_global = Vec::with_capacity(vertices.len());
    let mut global_to_local = HashMap::with_capacity(vertices.len());
    for &v in vertices {
        if v >= graph.num_nodes() {
            return Err(Error::Range {
                what: "vertex id",
                value: v,
                limit: graph.num_nodes(),
            });
        }
        if let std::collections::hash_map::Entry::Vacant(e) = global_to_local.entry(v) {
            e.insert(local_to_global.len());
            local_to_global.push(v);
        }
    }
    if !global_to_local.contains_key(&anchor) {
        return Err(Error::Contract(format!(
            "anchor {anchor} not in the vertex set"
        )));
    }

    let mut local_edges = Vec::new();
    for (a, &ga) in local_to_global.iter().enumerate() {
        for gb in graph.neighbors(ga) {
            if let Some(&b) = global_to_local.get(gb) {
                if a < b {
                    local_edges.push((a, b));
                }
            }
        }
    }
    local_edges.sort_unstable();

    let n = local_to_global.len();
    let norm_adj = NormalizedAdj::from_edges(n, &local_edges)?;
    let mut features = Array2::<f64>::zeros((n, graph.feature_dim()));
    for (a, &g) in local_to_global.iter().enumerate() {
        features.row_mut(a).assign(&graph.features().row(g));
    }

    Ok(SubgraphView {
        anchor,
        local_to_global,
        local_edges,
        norm_adj,
        features,
    })
}
