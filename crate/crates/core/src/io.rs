//! On-disk formats: graph JSON, attack-truth sidecar, split artifact, and
//! CSV import.
//!
//! Every JSON artifact is self-describing through a `format_version` field;
//! loaders reject unknown versions and re-validate all graph invariants, so a
//! truncated or hand-edited file fails loudly instead of corrupting a run.
//! Floats are serialized in shortest-roundtrip form and reload bit-exactly.

use crate::attack::AttackGroundTruth;
use crate::error::{Error, Result};
use crate::graph::{Graph, InductiveSplit};
use crate::linalg::DenseMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

pub const GRAPH_FORMAT_VERSION: u32 = 1;
pub const TRUTH_FORMAT_VERSION: u32 = 1;
pub const SPLIT_FORMAT_VERSION: u32 = 1;

/// Serializes any value as compact JSON. Field order is fixed by the type,
/// so identical values give identical bytes.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    serde_json::to_writer(&mut writer, value)
        .map_err(|e| Error::io(path, std::io::Error::new(std::io::ErrorKind::Other, e)))?;
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::parse(path, e.to_string()))
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    format_version: u32,
    num_nodes: usize,
    num_classes: usize,
    feature_dim: usize,
    edges: Vec<[usize; 2]>,
    features: Vec<Vec<f64>>,
    labels: Vec<Option<usize>>,
    labeled_mask: Vec<bool>,
}

fn graph_to_file(graph: &Graph) -> GraphFile {
    GraphFile {
        format_version: GRAPH_FORMAT_VERSION,
        num_nodes: graph.num_nodes(),
        num_classes: graph.num_classes(),
        feature_dim: graph.feature_dim(),
        edges: graph.edges().iter().map(|&(u, v)| [u, v]).collect(),
        features: (0..graph.num_nodes())
            .map(|v| graph.features().row(v).to_vec())
            .collect(),
        labels: graph.labels().to_vec(),
        labeled_mask: graph.labeled_mask().to_vec(),
    }
}

fn file_to_graph(file: GraphFile, path: &Path) -> Result<Graph> {
    if file.format_version != GRAPH_FORMAT_VERSION {
        return Err(Error::parse(
            path,
            format!(
                "unsupported graph format_version {} (expected {GRAPH_FORMAT_VERSION})",
                file.format_version
            ),
        ));
    }
    if file.features.len() != file.num_nodes {
        return Err(Error::parse(
            path,
            format!(
                "feature row count {} does not match num_nodes {}",
                file.features.len(),
                file.num_nodes
            ),
        ));
    }
    for (v, row) in file.features.iter().enumerate() {
        if row.len() != file.feature_dim {
            return Err(Error::parse(
                path,
                format!(
                    "feature row {v} has {} entries, expected {}",
                    row.len(),
                    file.feature_dim
                ),
            ));
        }
    }
    let features = DenseMatrix::from_rows(&file.features);
    let edges: Vec<(usize, usize)> = file.edges.iter().map(|&[u, v]| (u, v)).collect();
    Graph::build(
        file.num_nodes,
        &edges,
        features,
        file.labels,
        file.labeled_mask,
        file.num_classes,
    )
}

pub fn save_graph(graph: &Graph, path: &Path) -> Result<()> {
    write_json(&graph_to_file(graph), path)
}

pub fn load_graph(path: &Path) -> Result<Graph> {
    file_to_graph(read_json(path)?, path)
}

#[derive(Serialize, Deserialize)]
struct TruthFile {
    format_version: u32,
    #[serde(flatten)]
    truth: AttackGroundTruth,
}

pub fn save_truth(truth: &AttackGroundTruth, path: &Path) -> Result<()> {
    write_json(
        &TruthFile {
            format_version: TRUTH_FORMAT_VERSION,
            truth: truth.clone(),
        },
        path,
    )
}

pub fn load_truth(path: &Path) -> Result<AttackGroundTruth> {
    let file: TruthFile = read_json(path)?;
    if file.format_version != TRUTH_FORMAT_VERSION {
        return Err(Error::parse(
            path,
            format!(
                "unsupported truth format_version {} (expected {TRUTH_FORMAT_VERSION})",
                file.format_version
            ),
        ));
    }
    Ok(file.truth)
}

#[derive(Serialize, Deserialize)]
struct SplitFile {
    format_version: u32,
    train: GraphFile,
    unseen: GraphFile,
    unseen_clean_ids: Vec<usize>,
    unseen_poison_candidate_ids: Vec<usize>,
    train_orig_ids: Vec<usize>,
    unseen_orig_ids: Vec<usize>,
}

pub fn save_split(split: &InductiveSplit, path: &Path) -> Result<()> {
    write_json(
        &SplitFile {
            format_version: SPLIT_FORMAT_VERSION,
            train: graph_to_file(&split.train_graph),
            unseen: graph_to_file(&split.unseen_graph),
            unseen_clean_ids: split.unseen_clean_ids.clone(),
            unseen_poison_candidate_ids: split.unseen_poison_candidate_ids.clone(),
            train_orig_ids: split.train_orig_ids.clone(),
            unseen_orig_ids: split.unseen_orig_ids.clone(),
        },
        path,
    )
}

pub fn load_split(path: &Path) -> Result<InductiveSplit> {
    let file: SplitFile = read_json(path)?;
    if file.format_version != SPLIT_FORMAT_VERSION {
        return Err(Error::parse(
            path,
            format!(
                "unsupported split format_version {} (expected {SPLIT_FORMAT_VERSION})",
                file.format_version
            ),
        ));
    }
    let unseen = file_to_graph(file.unseen, path)?;
    let mut seen = vec![false; unseen.num_nodes()];
    for &v in file
        .unseen_clean_ids
        .iter()
        .chain(&file.unseen_poison_candidate_ids)
    {
        if v >= unseen.num_nodes() || seen[v] {
            return Err(Error::parse(
                path,
                format!("unseen subset ids do not partition the unseen node set (node {v})"),
            ));
        }
        seen[v] = true;
    }
    if seen.iter().any(|&s| !s) {
        return Err(Error::parse(
            path,
            "unseen subset ids do not cover the unseen node set".to_string(),
        ));
    }
    Ok(InductiveSplit {
        train_graph: file_to_graph(file.train, path)?,
        unseen_graph: unseen,
        unseen_clean_ids: file.unseen_clean_ids,
        unseen_poison_candidate_ids: file.unseen_poison_candidate_ids,
        train_orig_ids: file.train_orig_ids,
        unseen_orig_ids: file.unseen_orig_ids,
    })
}

/// Builds an unlabeled graph from a two-column integer edge CSV and an
/// `N x F` feature CSV (no headers in either file).
pub fn import_csv(edges_path: &Path, features_path: &Path, num_classes: usize) -> Result<Graph> {
    let features = read_features_csv(features_path)?;
    let edges = read_edges_csv(edges_path)?;
    let n = features.rows();
    Graph::build(n, &edges, features, vec![None; n], vec![false; n], num_classes)
}

fn read_edges_csv(path: &Path) -> Result<Vec<(usize, usize)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path, e.to_string()))?;
    let mut edges = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(path, e.to_string()))?;
        if record.len() != 2 {
            return Err(Error::parse(
                path,
                format!("edge row {line} has {} fields, expected 2", record.len()),
            ));
        }
        let parse = |field: &str| {
            field.parse::<usize>().map_err(|_| {
                Error::parse(path, format!("edge row {line}: '{field}' is not a node index"))
            })
        };
        edges.push((parse(&record[0])?, parse(&record[1])?));
    }
    Ok(edges)
}

fn read_features_csv(path: &Path) -> Result<DenseMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path, e.to_string()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(path, e.to_string()))?;
        let mut row = Vec::with_capacity(record.len());
        for field in record.iter() {
            row.push(field.parse::<f64>().map_err(|_| {
                Error::parse(path, format!("feature row {line}: '{field}' is not a number"))
            })?);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::parse(
                    path,
                    format!(
                        "feature row {line} has {} entries, expected {}",
                        row.len(),
                        first.len()
                    ),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::parse(path, "feature file has no rows".to_string()));
    }
    Ok(DenseMatrix::from_rows(&rows))
}

/// Writes lines of text with a trailing newline; shared by the CSV report
/// emitters so their byte output stays fully deterministic.
pub(crate) fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    for line in lines {
        writeln!(writer, "{line}").map_err(|e| Error::io(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}
