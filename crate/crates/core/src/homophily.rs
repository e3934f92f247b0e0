//! Feature-based homophily diagnostics.
//!
//! The central quantity is per-node feature homophily: the similarity
//! between a node's own features and the aggregate of its neighbors'
//! features. Backdoored nodes sit in neighborhoods they do not resemble, so
//! group summaries of this score separate poisoned from clean populations.
//! Two analytical probes accompany it: an exact decomposition of how a
//! structure+feature perturbation shifts propagated representations, and a
//! linearized test of whether a representation shift pushes a node toward a
//! designated target class.

use crate::error::{Error, Result};
use crate::graph::{Aggregation, Graph};
use crate::linalg::{DenseMatrix, SparseMatrix};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Similarity {
    Cosine,
    InnerProduct,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomophilyConfig {
    pub similarity: Similarity,
    pub aggregation: Aggregation,
}

impl Default for HomophilyConfig {
    fn default() -> Self {
        HomophilyConfig {
            similarity: Similarity::Cosine,
            aggregation: Aggregation::Mean,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Cosine similarity with the zero-vector convention: if either side has
/// zero norm the similarity is 0.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

/// Similarity between node `v`'s features and its aggregated neighborhood.
/// Isolated nodes score 0 under either similarity.
pub fn feature_homophily(graph: &Graph, v: usize, config: &HomophilyConfig) -> f64 {
    let neighbors = graph.neighbors(v);
    if neighbors.is_empty() {
        return 0.0;
    }
    let f = graph.feature_dim();
    let mut agg = vec![0.0; f];
    for &u in neighbors {
        for (a, &x) in agg.iter_mut().zip(graph.features().row(u)) {
            *a += x;
        }
    }
    if config.aggregation == Aggregation::Mean {
        let inv = 1.0 / neighbors.len() as f64;
        for a in &mut agg {
            *a *= inv;
        }
    }
    let own = graph.features().row(v);
    match config.similarity {
        Similarity::Cosine => cosine(own, &agg),
        Similarity::InnerProduct => dot(own, &agg),
    }
}

/// Summary of one node group's homophily scores. `count == 0` leaves the
/// statistics empty instead of producing NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub name: String,
    pub count: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HomophilyAudit {
    pub groups: Vec<GroupStats>,
}

/// Per-group homophily statistics over disjoint node groups, reported in the
/// order the groups were given. The standard deviation is the population
/// form.
pub fn homophily_audit(
    graph: &Graph,
    groups: &[(String, Vec<usize>)],
    config: &HomophilyConfig,
) -> Result<HomophilyAudit> {
    let mut claimed = vec![false; graph.num_nodes()];
    for (name, nodes) in groups {
        for &v in nodes {
            if v >= graph.num_nodes() {
                return Err(Error::IndexOutOfRange {
                    context: "audit group node",
                    index: v,
                    len: graph.num_nodes(),
                });
            }
            if claimed[v] {
                return Err(Error::InvalidInput(format!(
                    "audit groups overlap at node {v} (group '{name}')"
                )));
            }
            claimed[v] = true;
        }
    }
    let mut out = Vec::with_capacity(groups.len());
    for (name, nodes) in groups {
        if nodes.is_empty() {
            out.push(GroupStats {
                name: name.clone(),
                count: 0,
                mean: None,
                std: None,
                min: None,
                max: None,
            });
            continue;
        }
        let scores: Vec<f64> = nodes
            .iter()
            .map(|&v| feature_homophily(graph, v, config))
            .collect();
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
        out.push(GroupStats {
            name: name.clone(),
            count: scores.len(),
            mean: Some(mean),
            std: Some(var.sqrt()),
            min: scores.iter().copied().fold(f64::INFINITY, f64::min).into(),
            max: scores.iter().copied().fold(f64::NEG_INFINITY, f64::max).into(),
        });
    }
    Ok(HomophilyAudit { groups: out })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.6}"))
}

pub fn write_audit_csv(audit: &HomophilyAudit, path: &Path) -> Result<()> {
    let mut lines = vec!["group,count,mean,std,min,max".to_string()];
    for g in &audit.groups {
        lines.push(format!(
            "{},{},{},{},{},{}",
            g.name,
            g.count,
            fmt_opt(g.mean),
            fmt_opt(g.std),
            fmt_opt(g.min),
            fmt_opt(g.max)
        ));
    }
    crate::io::write_lines(path, &lines)
}

pub fn write_audit_json(audit: &HomophilyAudit, path: &Path) -> Result<()> {
    crate::io::write_json(audit, path)
}

/// One structure+feature perturbation applied to a propagation stack:
/// compare `depth` rounds of mixing under the base and perturbed operators.
#[derive(Debug, Clone, Copy)]
pub struct PerturbationQuery<'a> {
    pub base_adj: &'a SparseMatrix,
    pub perturbed_adj: &'a SparseMatrix,
    pub features: &'a DenseMatrix,
    pub delta_features: &'a DenseMatrix,
    pub depth: usize,
    pub node: usize,
}

/// The shift split into its two mechanisms. `structural + feature` equals
/// `direct` exactly (up to floating-point rounding).
#[derive(Debug, Clone)]
pub struct PropagationShift {
    /// Row of `P'^l (X + dX) - P^l X` at the queried node.
    pub direct: Vec<f64>,
    /// Contribution of the changed mixing weights acting on old features.
    pub structural: Vec<f64>,
    /// Contribution of the feature change propagated by the new weights.
    pub feature: Vec<f64>,
}

const MAX_DENSE_POWER_NODES: usize = 64;

fn dense_power(m: &DenseMatrix, l: usize) -> DenseMatrix {
    let n = m.rows();
    let mut out = DenseMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 });
    for _ in 0..l {
        out = out.matmul(m);
    }
    out
}

/// Evaluates the exact two-term decomposition of a propagation shift. The
/// operator powers are materialized densely, so this is a diagnostic for
/// small instances only (at most 64 nodes).
pub fn propagation_shift(query: &PerturbationQuery) -> Result<PropagationShift> {
    let n = query.base_adj.rows();
    if n > MAX_DENSE_POWER_NODES {
        return Err(Error::InvalidInput(format!(
            "propagation_shift materializes dense operator powers and is limited to {MAX_DENSE_POWER_NODES} nodes, got {n}"
        )));
    }
    if query.base_adj.cols() != n
        || query.perturbed_adj.rows() != n
        || query.perturbed_adj.cols() != n
    {
        return Err(Error::DimensionMismatch {
            context: "perturbation adjacencies",
            expected: format!("{n} x {n}"),
            found: format!(
                "{} x {}",
                query.perturbed_adj.rows(),
                query.perturbed_adj.cols()
            ),
        });
    }
    if query.features.rows() != n || query.delta_features.rows() != n {
        return Err(Error::DimensionMismatch {
            context: "perturbation features",
            expected: format!("{n} rows"),
            found: format!(
                "{} and {} rows",
                query.features.rows(),
                query.delta_features.rows()
            ),
        });
    }
    if query.delta_features.cols() != query.features.cols() {
        return Err(Error::DimensionMismatch {
            context: "perturbation feature width",
            expected: format!("{}", query.features.cols()),
            found: format!("{}", query.delta_features.cols()),
        });
    }
    if query.node >= n {
        return Err(Error::IndexOutOfRange {
            context: "perturbation node",
            index: query.node,
            len: n,
        });
    }

    let base_pow = dense_power(&query.base_adj.to_dense(), query.depth);
    let pert_pow = dense_power(&query.perturbed_adj.to_dense(), query.depth);
    let f = query.features.cols();
    let v = query.node;

    let mut direct = vec![0.0; f];
    let mut structural = vec![0.0; f];
    let mut feature = vec![0.0; f];
    for u in 0..n {
        let pi = base_pow.get(v, u);
        let pi_new = pert_pow.get(v, u);
        let x_u = query.features.row(u);
        let dx_u = query.delta_features.row(u);
        for j in 0..f {
            direct[j] += pi_new * (x_u[j] + dx_u[j]) - pi * x_u[j];
            structural[j] += (pi_new - pi) * x_u[j];
            feature[j] += pi_new * dx_u[j];
        }
    }
    Ok(PropagationShift {
        direct,
        structural,
        feature,
    })
}

/// Linearized attraction of a representation shift toward class `y_t`:
/// the inner product of `w_{y_t} - sum_c p_c w_c` with `delta_h`.
/// `class_weights` holds one class weight vector per row. A positive value
/// means the first-order cross-entropy response to `delta_h` favors `y_t`.
pub fn target_alignment(
    class_weights: &DenseMatrix,
    prob_row: &[f64],
    y_t: usize,
    delta_h: &[f64],
) -> Result<f64> {
    let k = class_weights.rows();
    let d = class_weights.cols();
    if prob_row.len() != k {
        return Err(Error::DimensionMismatch {
            context: "alignment probability row",
            expected: format!("{k}"),
            found: format!("{}", prob_row.len()),
        });
    }
    if delta_h.len() != d {
        return Err(Error::DimensionMismatch {
            context: "alignment shift vector",
            expected: format!("{d}"),
            found: format!("{}", delta_h.len()),
        });
    }
    if y_t >= k {
        return Err(Error::IndexOutOfRange {
            context: "alignment target class",
            index: y_t,
            len: k,
        });
    }
    let total: f64 = prob_row.iter().sum();
    if (total - 1.0).abs() > 1e-9 || prob_row.iter().any(|&p| p < 0.0) {
        return Err(Error::InvalidInput(format!(
            "probability row must be a distribution (sum {total})"
        )));
    }
    let mut acc = 0.0;
    for j in 0..d {
        let mut avg = 0.0;
        for (c, &p) in prob_row.iter().enumerate() {
            avg += p * class_weights.get(c, j);
        }
        acc += (class_weights.get(y_t, j) - avg) * delta_h[j];
    }
    Ok(acc)
}
