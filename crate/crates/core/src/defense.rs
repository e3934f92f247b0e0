//! The full two-stage defense pipeline.
//!
//! Stage one trains the reconstruction model on the (presumed backdoored)
//! training graph, scores every node, and prunes edges around unlabeled
//! suspects. Stage two trains the classifier on the pruned graph under the
//! reweighted objective. The pipeline sees only the graph itself; it takes
//! no ground truth anywhere.

use crate::crm::{train_crm, CrmConfig, TrainedCrm};
use crate::detect::{detect, prune_trigger_edges, DetectConfig, DetectionReport};
use crate::error::Result;
use crate::graph::Graph;
use crate::robust::{train_robust, RobustConfig, TrainedClassifier};

#[derive(Debug, Clone, PartialEq)]
pub struct DefenseConfig {
    pub crm: CrmConfig,
    pub detect: DetectConfig,
    pub robust: RobustConfig,
}

impl Default for DefenseConfig {
    fn default() -> Self {
        DefenseConfig {
            crm: CrmConfig::default(),
            detect: DetectConfig::default(),
            robust: RobustConfig::default(),
        }
    }
}

/// Everything the defense produced, kept for inspection and artifacts.
#[derive(Debug, Clone)]
pub struct DefenseOutcome {
    pub crm: TrainedCrm,
    pub report: DetectionReport,
    pub pruned_graph: Graph,
    pub classifier: TrainedClassifier,
}

/// Runs detection and robust training on a training graph.
pub fn defend(graph: &Graph, config: &DefenseConfig) -> Result<DefenseOutcome> {
    let crm = train_crm(graph, &config.crm)?;
    let errors = crm.model.node_errors(graph)?;
    let report = detect(graph, &errors, &config.detect)?;
    let pruned_graph = prune_trigger_edges(graph, &report.suspect_triggers)?;
    let classifier = train_robust(&pruned_graph, &report, &config.robust)?;
    Ok(DefenseOutcome {
        crm,
        report,
        pruned_graph,
        classifier,
    })
}
