//! Attributed graph representation and structural operations.
//!
//! A [`Graph`] is an undirected simple graph with dense node features,
//! optional class labels, and a training-visibility mask. Edges are stored
//! once in canonical `(min, max)` order; self-loops only ever appear
//! implicitly inside [`Graph::normalized_adjacency`].

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, SparseMatrix};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// How neighbor feature rows are combined into one row per node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Sum,
    Mean,
}

impl Aggregation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Aggregation::Sum => "sum",
            Aggregation::Mean => "mean",
        }
    }

    pub fn parse(s: &str) -> Result<Aggregation> {
        match s {
            "sum" => Ok(Aggregation::Sum),
            "mean" => Ok(Aggregation::Mean),
            other => Err(Error::InvalidConfig(format!(
                "unknown aggregation '{other}', expected sum or mean"
            ))),
        }
    }
}

/// Undirected attributed graph.
///
/// Invariants, enforced by [`Graph::build`]:
/// - edges are deduplicated, self-loop free, and stored as `(u, v)` with `u < v`;
/// - `features` has one row per node;
/// - `labels[v]`, where present, lies in `[0, num_classes)`;
/// - `labeled_mask[v]` implies `labels[v]` is present.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    num_classes: usize,
    edges: Vec<(usize, usize)>,
    features: DenseMatrix,
    labels: Vec<Option<usize>>,
    labeled_mask: Vec<bool>,
    neighbor_offsets: Vec<usize>,
    neighbor_ids: Vec<usize>,
}

impl Graph {
    pub fn build(
        num_nodes: usize,
        edges: &[(usize, usize)],
        features: DenseMatrix,
        labels: Vec<Option<usize>>,
        labeled_mask: Vec<bool>,
        num_classes: usize,
    ) -> Result<Graph> {
        if features.rows() != num_nodes {
            return Err(Error::DimensionMismatch {
                context: "graph features",
                expected: format!("{num_nodes} rows"),
                found: format!("{} rows", features.rows()),
            });
        }
        if labels.len() != num_nodes {
            return Err(Error::DimensionMismatch {
                context: "graph labels",
                expected: format!("{num_nodes} entries"),
                found: format!("{} entries", labels.len()),
            });
        }
        if labeled_mask.len() != num_nodes {
            return Err(Error::DimensionMismatch {
                context: "graph labeled_mask",
                expected: format!("{num_nodes} entries"),
                found: format!("{} entries", labeled_mask.len()),
            });
        }
        for (v, label) in labels.iter().enumerate() {
            if let Some(c) = label {
                if *c >= num_classes {
                    return Err(Error::InvalidInput(format!(
                        "label {c} of node {v} outside [0, {num_classes})"
                    )));
                }
            }
            if labeled_mask[v] && label.is_none() {
                return Err(Error::InvalidInput(format!(
                    "node {v} is marked labeled but has no label"
                )));
            }
        }

        // Canonicalize: orient, drop self-loops, sort, dedup.
        let mut canonical = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a >= num_nodes || b >= num_nodes {
                return Err(Error::IndexOutOfRange {
                    context: "edge endpoint",
                    index: a.max(b),
                    len: num_nodes,
                });
            }
            if a != b {
                canonical.push((a.min(b), a.max(b)));
            }
        }
        canonical.sort_unstable();
        canonical.dedup();

        let mut degree = vec![0usize; num_nodes];
        for &(u, v) in &canonical {
            degree[u] += 1;
            degree[v] += 1;
        }
        let mut neighbor_offsets = Vec::with_capacity(num_nodes + 1);
        neighbor_offsets.push(0);
        for v in 0..num_nodes {
            neighbor_offsets.push(neighbor_offsets[v] + degree[v]);
        }
        let mut cursor = neighbor_offsets.clone();
        let mut neighbor_ids = vec![0usize; 2 * canonical.len()];
        for &(u, v) in &canonical {
            neighbor_ids[cursor[u]] = v;
            cursor[u] += 1;
            neighbor_ids[cursor[v]] = u;
            cursor[v] += 1;
        }
        // Canonical edge order already emits each row's neighbors sorted.

        Ok(Graph {
            num_nodes,
            num_classes,
            edges: canonical,
            features,
            labels,
            labeled_mask,
            neighbor_offsets,
            neighbor_ids,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn label(&self, v: usize) -> Option<usize> {
        self.labels[v]
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn is_labeled(&self, v: usize) -> bool {
        self.labeled_mask[v]
    }

    pub fn labeled_mask(&self) -> &[bool] {
        &self.labeled_mask
    }

    /// Ascending indices of nodes visible to training.
    pub fn labeled_nodes(&self) -> Vec<usize> {
        (0..self.num_nodes).filter(|&v| self.labeled_mask[v]).collect()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbor_ids[self.neighbor_offsets[v]..self.neighbor_offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.neighbor_offsets[v + 1] - self.neighbor_offsets[v]
    }

    /// Symmetric renormalized adjacency `D^{-1/2} (A + I) D^{-1/2}` where
    /// `D` holds the self-loop-augmented degrees. Rows of the result are a
    /// convex-like mix of the node itself and its neighbors.
    pub fn normalized_adjacency(&self) -> SparseMatrix {
        let n = self.num_nodes;
        let inv_sqrt: Vec<f64> = (0..n)
            .map(|v| 1.0 / ((self.degree(v) + 1) as f64).sqrt())
            .collect();
        let mut triplets = Vec::with_capacity(n + 2 * self.edges.len());
        for v in 0..n {
            triplets.push((v, v, inv_sqrt[v] * inv_sqrt[v]));
            for &u in self.neighbors(v) {
                triplets.push((v, u, inv_sqrt[v] * inv_sqrt[u]));
            }
        }
        SparseMatrix::from_triplets(n, n, &triplets)
    }

    /// Unnormalized binary adjacency without self-loops.
    pub fn binary_adjacency(&self) -> SparseMatrix {
        let n = self.num_nodes;
        let mut triplets = Vec::with_capacity(2 * self.edges.len());
        for v in 0..n {
            for &u in self.neighbors(v) {
                triplets.push((v, u, 1.0));
            }
        }
        SparseMatrix::from_triplets(n, n, &triplets)
    }

    /// Row `v` of the result is the sum of `x` over the neighbors of `v`
    /// (self excluded). Isolated nodes get a zero row.
    pub fn aggregate_sum(&self, x: &DenseMatrix) -> DenseMatrix {
        assert_eq!(x.rows(), self.num_nodes, "aggregate input rows");
        let w = x.cols();
        let mut out = DenseMatrix::zeros(self.num_nodes, w);
        for v in 0..self.num_nodes {
            for &u in self.neighbors(v) {
                let lo = v * w;
                for (j, &s) in x.row(u).iter().enumerate() {
                    out.data_mut()[lo + j] += s;
                }
            }
        }
        out
    }

    /// Dispatch over the two neighbor aggregations.
    pub fn aggregate(&self, x: &DenseMatrix, how: Aggregation) -> DenseMatrix {
        match how {
            Aggregation::Sum => self.aggregate_sum(x),
            Aggregation::Mean => self.aggregate_mean(x),
        }
    }

    /// Neighbor mean; isolated nodes get a zero row rather than 0/0.
    pub fn aggregate_mean(&self, x: &DenseMatrix) -> DenseMatrix {
        let mut out = self.aggregate_sum(x);
        for v in 0..self.num_nodes {
            let d = self.degree(v);
            if d > 0 {
                let inv = 1.0 / d as f64;
                for o in out.row_mut(v) {
                    *o *= inv;
                }
            }
        }
        out
    }

    /// Node-induced subgraph over `nodes` (ascending, no duplicates), with
    /// nodes reindexed to `0..nodes.len()` in the given order. Edges with an
    /// endpoint outside `nodes` are dropped.
    pub fn induced_subgraph(&self, nodes: &[usize]) -> Result<Graph> {
        let mut local = vec![usize::MAX; self.num_nodes];
        for (i, &v) in nodes.iter().enumerate() {
            if v >= self.num_nodes {
                return Err(Error::IndexOutOfRange {
                    context: "induced subgraph node",
                    index: v,
                    len: self.num_nodes,
                });
            }
            if i > 0 && nodes[i - 1] >= v {
                return Err(Error::InvalidInput(
                    "induced subgraph nodes must be strictly ascending".into(),
                ));
            }
            local[v] = i;
        }
        let mut edges = Vec::new();
        for &(u, v) in &self.edges {
            if local[u] != usize::MAX && local[v] != usize::MAX {
                edges.push((local[u], local[v]));
            }
        }
        let features = DenseMatrix::from_fn(nodes.len(), self.feature_dim(), |i, j| {
            self.features.get(nodes[i], j)
        });
        let labels = nodes.iter().map(|&v| self.labels[v]).collect();
        let mask = nodes.iter().map(|&v| self.labeled_mask[v]).collect();
        Graph::build(nodes.len(), &edges, features, labels, mask, self.num_classes)
    }

}

/// Disjoint train/unseen partition for inductive evaluation.
///
/// `unseen_clean_ids` and `unseen_poison_candidate_ids` are local indices
/// into `unseen_graph` and partition its node set. `*_orig_ids[i]` maps local
/// node `i` back to the index in the graph that was split.
#[derive(Debug, Clone)]
pub struct InductiveSplit {
    pub train_graph: Graph,
    pub unseen_graph: Graph,
    pub unseen_clean_ids: Vec<usize>,
    pub unseen_poison_candidate_ids: Vec<usize>,
    pub train_orig_ids: Vec<usize>,
    pub unseen_orig_ids: Vec<usize>,
}

/// Splits by uniform node sampling into a training graph and an unseen graph,
/// dropping cross-partition edges, then halves the unseen nodes into a clean
/// subset and a poison-candidate subset (the clean side takes the odd node).
/// Both sides of both partitions must end up nonempty.
pub fn split_inductive(graph: &Graph, train_fraction: f64, seed: u64) -> Result<InductiveSplit> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train_fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n = graph.num_nodes();
    if n < 3 {
        return Err(Error::InvalidInput(format!(
            "inductive split needs at least 3 nodes, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);

    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 2);
    let mut train_ids: Vec<usize> = perm[..n_train].to_vec();
    let mut unseen_ids: Vec<usize> = perm[n_train..].to_vec();
    train_ids.sort_unstable();
    unseen_ids.sort_unstable();

    let train_graph = graph.induced_subgraph(&train_ids)?;
    let unseen_graph = graph.induced_subgraph(&unseen_ids)?;

    let m = unseen_ids.len();
    let mut local: Vec<usize> = (0..m).collect();
    local.shuffle(&mut rng);
    let n_clean = m - m / 2;
    let mut clean: Vec<usize> = local[..n_clean].to_vec();
    let mut candidates: Vec<usize> = local[n_clean..].to_vec();
    clean.sort_unstable();
    candidates.sort_unstable();
    if clean.is_empty() || candidates.is_empty() {
        return Err(Error::InvalidInput(format!(
            "unseen set of {m} nodes cannot be halved into two nonempty subsets"
        )));
    }

    Ok(InductiveSplit {
        train_graph,
        unseen_graph,
        unseen_clean_ids: clean,
        unseen_poison_candidate_ids: candidates,
        train_orig_ids: train_ids,
        unseen_orig_ids: unseen_ids,
    })
}
