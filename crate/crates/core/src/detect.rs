//! Reconstruction-error detection.
//!
//! Per-node reconstruction errors are standardized against the graph-wide
//! error distribution and squashed into suspicion scores; the top fraction
//! by raw error becomes the suspect set, split by training visibility into
//! suspected trigger nodes (unlabeled, prunable) and suspected poisoned
//! training nodes (labeled, down-weightable and unlearnable).

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::io::write_lines;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Direction of the score mapping. `Increasing` gives high scores to high
/// errors and is what the rest of the pipeline assumes; `Decreasing` is the
/// mirrored variant kept for comparison runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreOrientation {
    #[default]
    Increasing,
    Decreasing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectConfig {
    /// Fraction of nodes flagged as suspects; the suspect count is the
    /// ceiling of `rho * num_nodes`.
    pub rho: f64,
    /// Temperature of the standardized-error sigmoid.
    pub tau: f64,
    pub orientation: ScoreOrientation,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig {
            rho: 0.03,
            tau: 0.5,
            orientation: ScoreOrientation::Increasing,
        }
    }
}

impl DetectConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "rho must lie in (0, 1], got {}",
                self.rho
            )));
        }
        if !(self.tau > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        Ok(())
    }
}

/// Everything the defense learned from reconstruction errors. Consumed by
/// edge pruning and by the robust training objective; contains no ground
/// truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub errors: Vec<f64>,
    pub mean_error: f64,
    pub std_error: f64,
    /// Suspicion score per node, in [0, 1].
    pub scores: Vec<f64>,
    /// All suspect nodes, ascending.
    pub suspects: Vec<usize>,
    /// Unlabeled suspects, ascending.
    pub suspect_triggers: Vec<usize>,
    /// Labeled suspects, ascending.
    pub suspect_targets: Vec<usize>,
    pub rho: f64,
    pub tau: f64,
    pub orientation: ScoreOrientation,
}

impl DetectionReport {
    /// Neutral report for runs without detection: zero scores and empty
    /// suspect sets make the robust objective collapse to plain supervised
    /// training.
    pub fn disabled(num_nodes: usize) -> DetectionReport {
        DetectionReport {
            errors: vec![0.0; num_nodes],
            mean_error: 0.0,
            std_error: 0.0,
            scores: vec![0.0; num_nodes],
            suspects: Vec::new(),
            suspect_triggers: Vec::new(),
            suspect_targets: Vec::new(),
            rho: 0.0,
            tau: 0.0,
            orientation: ScoreOrientation::Increasing,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn mean_and_population_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Sigmoid of the standardized error, `sigmoid((e - mean) / (tau * std))`
/// for the increasing orientation and the negated argument for the
/// decreasing one. A degenerate error distribution (zero spread) maps every
/// node to 0.5.
pub fn suspicion_scores(errors: &[f64], tau: f64, orientation: ScoreOrientation) -> Result<Vec<f64>> {
    if errors.is_empty() {
        return Err(Error::InvalidInput("empty error vector".into()));
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidConfig(format!("tau must be positive, got {tau}")));
    }
    if let Some(bad) = errors.iter().find(|e| !e.is_finite()) {
        return Err(Error::Numeric(format!("non-finite reconstruction error {bad}")));
    }
    let (mean, std) = mean_and_population_std(errors);
    Ok(errors
        .iter()
        .map(|&e| {
            if std == 0.0 {
                0.5
            } else {
                let z = (e - mean) / (tau * std);
                match orientation {
                    ScoreOrientation::Increasing => sigmoid(z),
                    ScoreOrientation::Decreasing => sigmoid(-z),
                }
            }
        })
        .collect())
}

// Suspect budget: the ceiling of rho * n taken on the exact decimal value.
// Products like 0.05 * 1000 can land one float ulp above the integer; snap
// to the integer before taking the ceiling.
fn suspect_count(rho: f64, n: usize) -> usize {
    let raw = rho * n as f64;
    let nearest = raw.round();
    let k = if (raw - nearest).abs() < 1e-9 { nearest } else { raw.ceil() };
    (k as usize).min(n)
}

/// Indices of the `ceil(rho * n)` largest errors, ties broken toward lower
/// index; returned ascending.
pub fn select_suspects(errors: &[f64], rho: f64) -> Result<Vec<usize>> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidConfig(format!("rho must lie in (0, 1], got {rho}")));
    }
    let mut order: Vec<usize> = (0..errors.len()).collect();
    order.sort_by(|&a, &b| errors[b].total_cmp(&errors[a]).then(a.cmp(&b)));
    let mut suspects = order[..suspect_count(rho, errors.len())].to_vec();
    suspects.sort_unstable();
    Ok(suspects)
}

/// Scores and partitions the suspect set for one graph.
pub fn detect(graph: &Graph, errors: &[f64], config: &DetectConfig) -> Result<DetectionReport> {
    config.validate()?;
    if errors.len() != graph.num_nodes() {
        return Err(Error::DimensionMismatch {
            context: "detection errors",
            expected: format!("{} entries", graph.num_nodes()),
            found: format!("{} entries", errors.len()),
        });
    }
    let scores = suspicion_scores(errors, config.tau, config.orientation)?;
    let (mean_error, std_error) = mean_and_population_std(errors);
    let suspects = select_suspects(errors, config.rho)?;
    let suspect_triggers: Vec<usize> = suspects
        .iter()
        .copied()
        .filter(|&v| !graph.is_labeled(v))
        .collect();
    let suspect_targets: Vec<usize> = suspects
        .iter()
        .copied()
        .filter(|&v| graph.is_labeled(v))
        .collect();
    Ok(DetectionReport {
        errors: errors.to_vec(),
        mean_error,
        std_error,
        scores,
        suspects,
        suspect_triggers,
        suspect_targets,
        rho: config.rho,
        tau: config.tau,
        orientation: config.orientation,
    })
}

/// Removes every edge incident to a suspected trigger node. Nodes are kept
/// (and become isolated), so node indices stay stable for downstream
/// training and evaluation.
pub fn prune_trigger_edges(graph: &Graph, suspect_triggers: &[usize]) -> Result<Graph> {
    let mut is_suspect = vec![false; graph.num_nodes()];
    for &v in suspect_triggers {
        if v >= graph.num_nodes() {
            return Err(Error::IndexOutOfRange {
                context: "suspect trigger",
                index: v,
                len: graph.num_nodes(),
            });
        }
        is_suspect[v] = true;
    }
    let kept: Vec<(usize, usize)> = graph
        .edges()
        .iter()
        .copied()
        .filter(|&(u, v)| !is_suspect[u] && !is_suspect[v])
        .collect();
    Graph::build(
        graph.num_nodes(),
        &kept,
        graph.features().clone(),
        graph.labels().to_vec(),
        graph.labeled_mask().to_vec(),
        graph.num_classes(),
    )
}

pub fn write_report_json(report: &DetectionReport, path: &Path) -> Result<()> {
    crate::io::write_json(report, path)
}

pub fn read_report_json(path: &Path) -> Result<DetectionReport> {
    crate::io::read_json(path)
}

/// Per-node score table; flags are 0/1 so the file loads cleanly as numeric
/// columns.
pub fn write_scores_csv(report: &DetectionReport, path: &Path) -> Result<()> {
    let mut lines = Vec::with_capacity(report.errors.len() + 1);
    lines.push("node,error,score,suspect,suspect_trigger,suspect_target".to_string());
    for v in 0..report.errors.len() {
        let suspect = report.suspects.binary_search(&v).is_ok();
        let trig = report.suspect_triggers.binary_search(&v).is_ok();
        let targ = report.suspect_targets.binary_search(&v).is_ok();
        lines.push(format!(
            "{},{},{},{},{},{}",
            v,
            report.errors[v],
            report.scores[v],
            suspect as u8,
            trig as u8,
            targ as u8
        ));
    }
    write_lines(path, &lines)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;

    fn graph_with_mask(n: usize, edges: &[(usize, usize)], labeled: &[usize]) -> Graph {
        let mut labels = vec![None; n];
        let mut mask = vec![false; n];
        for &v in labeled {
            labels[v] = Some(0);
            mask[v] = true;
        }
        Graph::build(n, edges, DenseMatrix::zeros(n, 2), labels, mask, 1).unwrap()
    }

    #[test]
    fn score_at_mean_is_half() {
        // errors [0, 2]: mean 1, population std 1.
        let scores = suspicion_scores(&[0.0, 1.0, 2.0], 0.5, ScoreOrientation::Increasing).unwrap();
        assert_eq!(scores[1], 0.5);
    }

    #[test]
    fn scores_match_sigmoid_of_standardized_error() {
        // errors [0, 2]: mean 1, std 1; tau 1 puts the ends at sigmoid(+-1).
        let scores = suspicion_scores(&[0.0, 2.0], 1.0, ScoreOrientation::Increasing).unwrap();
        assert_eq!(scores[1], 0.7310585786300049);
        assert_eq!(scores[0], 0.2689414213699951);
        // tau 0.5 doubles the standardized argument.
        let sharp = suspicion_scores(&[0.0, 2.0], 0.5, ScoreOrientation::Increasing).unwrap();
        assert_eq!(sharp[1], 0.8807970779778823);
    }

    #[test]
    fn decreasing_orientation_mirrors_the_argument() {
        let inc = suspicion_scores(&[0.0, 2.0], 1.0, ScoreOrientation::Increasing).unwrap();
        let dec = suspicion_scores(&[0.0, 2.0], 1.0, ScoreOrientation::Decreasing).unwrap();
        assert_eq!(dec[1], 0.2689414213699951);
        assert_eq!(dec[0], 0.7310585786300049);
        assert!(inc[1] > 0.5 && dec[1] < 0.5);
    }

    #[test]
    fn degenerate_error_spread_scores_half_everywhere() {
        let scores = suspicion_scores(&[3.0; 5], 0.5, ScoreOrientation::Increasing).unwrap();
        assert_eq!(scores, vec![0.5; 5]);
    }

    #[test]
    fn suspect_count_is_ceiling_of_rho_n() {
        assert_eq!(suspect_count(0.03, 10), 1);
        assert_eq!(suspect_count(0.25, 10), 3);
        assert_eq!(suspect_count(0.03, 1000), 30);
        assert_eq!(suspect_count(0.05, 1000), 50);
        assert_eq!(suspect_count(0.08, 1000), 80);
        assert_eq!(suspect_count(0.1, 1000), 100);
        assert_eq!(suspect_count(1.0, 7), 7);
    }

    #[test]
    fn select_suspects_ranks_by_error_then_index() {
        let errors = [0.1, 0.9, 0.9, 0.3, 0.5];
        // Budget 3: both 0.9s, then the 0.5.
        assert_eq!(select_suspects(&errors, 0.6).unwrap(), vec![1, 2, 4]);
        // Budget 1: tie at 0.9 resolves to the lower index.
        assert_eq!(select_suspects(&errors, 0.1).unwrap(), vec![1]);
    }

    #[test]
    fn detect_partitions_suspects_by_mask() {
        let g = graph_with_mask(6, &[(0, 1), (2, 3)], &[0, 2, 4]);
        let errors = [9.0, 8.0, 7.0, 0.1, 0.1, 0.1];
        let report = detect(&g, &errors, &DetectConfig { rho: 0.5, ..DetectConfig::default() })
            .unwrap();
        assert_eq!(report.suspects, vec![0, 1, 2]);
        assert_eq!(report.suspect_triggers, vec![1]);
        assert_eq!(report.suspect_targets, vec![0, 2]);
        assert_eq!(report.errors.len(), 6);
        assert_eq!(report.scores.len(), 6);
    }

    #[test]
    fn detect_rejects_bad_inputs() {
        let g = graph_with_mask(3, &[], &[]);
        assert!(detect(&g, &[1.0, 2.0], &DetectConfig::default()).is_err());
        assert!(detect(
            &g,
            &[1.0, 2.0, 3.0],
            &DetectConfig { rho: 0.0, ..DetectConfig::default() }
        )
        .is_err());
        assert!(detect(
            &g,
            &[1.0, f64::NAN, 3.0],
            &DetectConfig::default()
        )
        .is_err());
    }

    #[test]
    fn prune_isolates_suspect_triggers_only() {
        let g = graph_with_mask(5, &[(0, 1), (1, 2), (2, 3), (3, 4)], &[0]);
        let pruned = prune_trigger_edges(&g, &[2]).unwrap();
        assert_eq!(pruned.num_nodes(), 5);
        assert_eq!(pruned.edges().to_vec(), vec![(0, 1), (3, 4)]);
        assert_eq!(pruned.degree(2), 0);
        assert_eq!(pruned.features(), g.features());
        assert_eq!(pruned.labels(), g.labels());
    }

    #[test]
    fn prune_with_no_suspects_is_identity() {
        let g = graph_with_mask(4, &[(0, 1), (2, 3)], &[1]);
        let pruned = prune_trigger_edges(&g, &[]).unwrap();
        assert_eq!(pruned, g);
    }

    #[test]
    fn disabled_report_is_neutral() {
        let report = DetectionReport::disabled(4);
        assert_eq!(report.scores, vec![0.0; 4]);
        assert!(report.suspects.is_empty());
        assert!(report.suspect_targets.is_empty());
    }

    #[test]
    fn report_roundtrips_through_json() {
        let g = graph_with_mask(4, &[(0, 1)], &[0, 3]);
        let report = detect(
            &g,
            &[0.5, 4.0, 1.0, 2.0],
            &DetectConfig { rho: 0.5, ..DetectConfig::default() },
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        write_report_json(&report, &path).unwrap();
        assert_eq!(read_report_json(&path).unwrap(), report);
    }

    #[test]
    fn scores_csv_layout() {
        let g = graph_with_mask(3, &[(0, 1)], &[2]);
        let report = detect(
            &g,
            &[5.0, 1.0, 2.0],
            &DetectConfig { rho: 0.34, ..DetectConfig::default() },
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.csv");
        write_scores_csv(&report, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "node,error,score,suspect,suspect_trigger,suspect_target");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,5,"));
        assert!(lines[1].ends_with(",1,1,0"));
        assert!(lines[2].ends_with(",0,0,0"));
    }
}
