//! Evaluation harness.
//!
//! One experiment repeats the same protocol over several derived seeds:
//! generate a synthetic graph, split it into a training graph and an unseen
//! graph, poison the training graph, then train one classifier per defense
//! condition. Clean accuracy is measured on the untouched unseen graph;
//! attack success is measured on the unseen graph with test-time triggers
//! attached to the poison-candidate subset, counting how often a candidate
//! whose true class differs from the target gets pushed into the target
//! class.

use crate::attack::{attach_test_triggers, AttackGroundTruth};
use crate::config::{derive_seed, run_seed, WorkbenchConfig};
use crate::defense::{defend, DefenseConfig};
use crate::detect::{write_report_json, write_scores_csv, DetectionReport};
use crate::error::{Error, Result};
use crate::graph::{split_inductive, Graph};
use crate::homophily::cosine;
use crate::io::{save_graph, save_truth, write_lines};
use crate::robust::{train_plain, write_trace_csv};
use crate::synth::generate_synthetic;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Training conditions compared by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Condition {
    /// Plain training on the clean training graph; the accuracy reference.
    #[serde(rename = "clean_ref")]
    CleanReference,
    /// Plain training on the poisoned graph.
    #[serde(rename = "undefended")]
    Undefended,
    /// Baseline defense: drop low-similarity edges, then train plainly.
    #[serde(rename = "prune")]
    PruneBaseline,
    /// The full two-stage defense.
    #[serde(rename = "cogbd")]
    Cogbd,
}

impl Condition {
    pub const ALL: [Condition; 4] = [
        Condition::CleanReference,
        Condition::Undefended,
        Condition::PruneBaseline,
        Condition::Cogbd,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Condition::CleanReference => "clean_ref",
            Condition::Undefended => "undefended",
            Condition::PruneBaseline => "prune",
            Condition::Cogbd => "cogbd",
        }
    }
}

/// Fraction of `nodes` with a known label that are predicted correctly.
pub fn accuracy(preds: &[usize], labels: &[Option<usize>], nodes: &[usize]) -> Result<f64> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for &v in nodes {
        if let Some(Some(y)) = labels.get(v) {
            total += 1;
            if preds[v] == *y {
                correct += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::InvalidInput(
            "accuracy over an empty labeled set is undefined".into(),
        ));
    }
    Ok(correct as f64 / total as f64)
}

/// Fraction of triggered candidates pulled into the target class. Candidates
/// whose true class already is the target are excluded; they cannot witness
/// a flip.
pub fn attack_success_rate(
    preds: &[usize],
    labels: &[Option<usize>],
    candidates: &[usize],
    target_label: usize,
) -> Result<f64> {
    let mut flipped = 0usize;
    let mut eligible = 0usize;
    for &v in candidates {
        match labels.get(v) {
            Some(Some(y)) if *y != target_label => {
                eligible += 1;
                if preds[v] == target_label {
                    flipped += 1;
                }
            }
            _ => {}
        }
    }
    if eligible == 0 {
        return Err(Error::InvalidInput(
            "no poison candidate lies outside the target class; attack success is undefined"
                .into(),
        ));
    }
    Ok(flipped as f64 / eligible as f64)
}

/// Fraction of the true poisoned set that the suspects cover; `None` when
/// the true set is empty (for example trigger nodes of a feature attack).
pub fn detection_recall(suspects: &[usize], truth_nodes: &[usize]) -> Option<f64> {
    if truth_nodes.is_empty() {
        return None;
    }
    let hit = truth_nodes.iter().filter(|v| suspects.contains(v)).count();
    Some(hit as f64 / truth_nodes.len() as f64)
}

/// Baseline defense: drop every edge whose endpoint features have cosine
/// similarity below the threshold.
pub fn prune_dissimilar_edges(graph: &Graph, threshold: f64) -> Result<Graph> {
    let kept: Vec<(usize, usize)> = graph
        .edges()
        .iter()
        .copied()
        .filter(|&(u, v)| cosine(graph.features().row(u), graph.features().row(v)) >= threshold)
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

/// One row of the metrics table; `run` is the repetition index or `mean`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub run: String,
    pub condition: Condition,
    pub accuracy: f64,
    pub asr: f64,
    pub recall_targets: Option<f64>,
    pub recall_triggers: Option<f64>,
}

/// Defense-internal outputs of one repetition, kept for inspection.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub run: usize,
    pub truth: AttackGroundTruth,
    pub report: DetectionReport,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    /// Per-run rows, grouped by run in condition order.
    pub rows: Vec<MetricsRow>,
    /// One aggregate row per condition.
    pub means: Vec<MetricsRow>,
    pub records: Vec<RunRecord>,
}

impl ExperimentResult {
    pub fn mean(&self, condition: Condition) -> Option<&MetricsRow> {
        self.means.iter().find(|r| r.condition == condition)
    }

    pub fn rows_for(&self, condition: Condition) -> Vec<&MetricsRow> {
        self.rows.iter().filter(|r| r.condition == condition).collect()
    }
}

fn mean_rows(rows: &[MetricsRow]) -> Vec<MetricsRow> {
    Condition::ALL
        .iter()
        .map(|&condition| {
            let group: Vec<&MetricsRow> = rows.iter().filter(|r| r.condition == condition).collect();
            let n = group.len() as f64;
            let mean_opt = |get: fn(&MetricsRow) -> Option<f64>| {
                let vals: Vec<f64> = group.iter().filter_map(|r| get(r)).collect();
                if vals.is_empty() {
                    None
                } else {
                    Some(vals.iter().sum::<f64>() / vals.len() as f64)
                }
            };
            MetricsRow {
                run: "mean".into(),
                condition,
                accuracy: group.iter().map(|r| r.accuracy).sum::<f64>() / n,
                asr: group.iter().map(|r| r.asr).sum::<f64>() / n,
                recall_targets: mean_opt(|r| r.recall_targets),
                recall_triggers: mean_opt(|r| r.recall_triggers),
            }
        })
        .collect()
}

/// Deterministic inputs of one repetition: the clean split, the poisoned
/// training graph, and the unseen graph with test-time triggers attached.
#[derive(Debug, Clone)]
pub struct RunSetup {
    pub train_clean: Graph,
    pub poisoned: Graph,
    pub truth: AttackGroundTruth,
    pub unseen_clean: Graph,
    pub unseen_triggered: Graph,
    pub candidates: Vec<usize>,
}

/// Builds the graphs of repetition `run` without any training; the same
/// derivation the experiment loop uses, so results line up run for run.
pub fn prepare_run(config: &WorkbenchConfig, run: usize) -> Result<RunSetup> {
    let base = run_seed(config.seed, run);
    let mut synth = config.synth.clone();
    synth.seed = derive_seed(base, "synth");
    let full = generate_synthetic(&synth)?;
    let split = split_inductive(&full, config.train_fraction, derive_seed(base, "split"))?;

    let attack = config.attack.with_seed(derive_seed(base, "attack"));
    let poisoned = attack.apply(&split.train_graph, config.target_label)?;
    let triggered = attach_test_triggers(
        &split.unseen_graph,
        &poisoned.truth,
        &attack,
        &split.unseen_poison_candidate_ids,
    )?;
    Ok(RunSetup {
        train_clean: split.train_graph,
        poisoned: poisoned.graph,
        truth: poisoned.truth,
        unseen_clean: split.unseen_graph,
        unseen_triggered: triggered,
        candidates: split.unseen_poison_candidate_ids,
    })
}

/// Runs the full protocol `config.runs` times. With an artifacts directory,
/// per-run graphs, reports, and checkpoints are written under it.
pub fn run_experiment(
    config: &WorkbenchConfig,
    artifacts_dir: Option<&Path>,
) -> Result<ExperimentResult> {
    config.validate()?;
    if let Some(dir) = artifacts_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for run in 0..config.runs {
        let base = run_seed(config.seed, run);
        let setup = prepare_run(config, run)?;

        let mut crm_cfg = config.crm.clone();
        crm_cfg.seed = derive_seed(base, "crm");
        let mut robust_cfg = config.robust.clone();
        robust_cfg.seed = derive_seed(base, "robust");

        // Same classifier init and schedule across conditions; only the
        // training graph and objective differ.
        let clean_ref = train_plain(&setup.train_clean, &robust_cfg)?;
        let undefended = train_plain(&setup.poisoned, &robust_cfg)?;
        let prune_graph =
            prune_dissimilar_edges(&setup.poisoned, config.prune_similarity_threshold)?;
        let prune = train_plain(&prune_graph, &robust_cfg)?;
        let outcome = defend(
            &setup.poisoned,
            &DefenseConfig {
                crm: crm_cfg,
                detect: config.detect.clone(),
                robust: robust_cfg,
            },
        )?;

        let unseen_nodes: Vec<usize> = (0..setup.unseen_clean.num_nodes()).collect();
        for (condition, trained) in [
            (Condition::CleanReference, &clean_ref),
            (Condition::Undefended, &undefended),
            (Condition::PruneBaseline, &prune),
            (Condition::Cogbd, &outcome.classifier),
        ] {
            let clean_preds = trained.model.predict(&setup.unseen_clean)?;
            let acc = accuracy(&clean_preds, setup.unseen_clean.labels(), &unseen_nodes)?;
            let trig_preds = trained.model.predict(&setup.unseen_triggered)?;
            let asr = attack_success_rate(
                &trig_preds,
                setup.unseen_triggered.labels(),
                &setup.candidates,
                config.target_label,
            )?;
            let (recall_targets, recall_triggers) = if condition == Condition::Cogbd {
                (
                    detection_recall(&outcome.report.suspect_targets, &setup.truth.target_nodes),
                    detection_recall(&outcome.report.suspect_triggers, &setup.truth.trigger_nodes),
                )
            } else {
                (None, None)
            };
            rows.push(MetricsRow {
                run: run.to_string(),
                condition,
                accuracy: acc,
                asr,
                recall_targets,
                recall_triggers,
            });
        }

        if let Some(dir) = artifacts_dir {
            let run_dir = dir.join(format!("run-{run}"));
            std::fs::create_dir_all(&run_dir).map_err(|e| Error::io(&run_dir, e))?;
            save_graph(&setup.poisoned, &run_dir.join("poisoned.graph.json"))?;
            save_truth(&setup.truth, &run_dir.join("truth.json"))?;
            write_report_json(&outcome.report, &run_dir.join("report.json"))?;
            write_scores_csv(&outcome.report, &run_dir.join("scores.csv"))?;
            outcome
                .crm
                .model
                .to_checkpoint()
                .save(&run_dir.join("crm.ckpt.json"))?;
            for (condition, trained) in [
                (Condition::CleanReference, &clean_ref),
                (Condition::Undefended, &undefended),
                (Condition::PruneBaseline, &prune),
                (Condition::Cogbd, &outcome.classifier),
            ] {
                trained
                    .model
                    .to_checkpoint()
                    .save(&run_dir.join(format!("{}.classifier.json", condition.as_str())))?;
            }
            write_trace_csv(&outcome.classifier.trace, &run_dir.join("cogbd.trace.csv"))?;
        }

        records.push(RunRecord {
            run,
            truth: setup.truth,
            report: outcome.report,
        });
    }
    let means = mean_rows(&rows);
    let result = ExperimentResult { rows, means, records };
    if let Some(dir) = artifacts_dir {
        write_metrics_csv(&result, &dir.join("metrics.csv"))?;
        write_metrics_json(&result, &dir.join("metrics.json"))?;
    }
    Ok(result)
}

fn metric_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Per-run rows followed by the mean rows.
pub fn write_metrics_csv(result: &ExperimentResult, path: &Path) -> Result<()> {
    let mut lines = Vec::with_capacity(result.rows.len() + result.means.len() + 1);
    lines.push("run,condition,accuracy,asr,recall_targets,recall_triggers".to_string());
    for row in result.rows.iter().chain(result.means.iter()) {
        lines.push(format!(
            "{},{},{},{},{},{}",
            row.run,
            row.condition.as_str(),
            row.accuracy,
            row.asr,
            metric_cell(row.recall_targets),
            metric_cell(row.recall_triggers)
        ));
    }
    write_lines(path, &lines)
}

#[derive(Serialize, Deserialize)]
struct MetricsFile {
    rows: Vec<MetricsRow>,
    means: Vec<MetricsRow>,
}

pub fn write_metrics_json(result: &ExperimentResult, path: &Path) -> Result<()> {
    crate::io::write_json(
        &MetricsFile {
            rows: result.rows.clone(),
            means: result.means.clone(),
        },
        path,
    )
}
