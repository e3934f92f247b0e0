//! Python bindings. The surface mirrors the command-line interface: every
//! entry point takes an optional `settings` dict of the same `key=value`
//! pairs the CLI accepts through `--set`, applied on top of the defaults,
//! and seeds fan out from `seed` with the same derivation the binary uses.
//! Values may be Python numbers or strings; both go through the one
//! config parser.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use std::path::PathBuf;

use cogbd::attack::AttackGroundTruth;
use cogbd::config::derive_seed;
use cogbd::defense::{defend as run_defense, DefenseConfig};
use cogbd::error::Error;
use cogbd::eval::{self, run_experiment, MetricsRow};
use cogbd::graph::{split_inductive, Graph as CoreGraph};
use cogbd::homophily::{feature_homophily, homophily_audit};
use cogbd::nn::Checkpoint;
use cogbd::robust::GcnClassifier;
use cogbd::synth::generate_synthetic;
use cogbd::WorkbenchConfig;

fn to_py_err(err: Error) -> PyErr {
    match &err {
        Error::InvalidConfig(_) | Error::InvalidInput(_) | Error::Parse { .. } => {
            PyValueError::new_err(err.to_string())
        }
        Error::Io { .. } => PyIOError::new_err(err.to_string()),
        _ => PyRuntimeError::new_err(err.to_string()),
    }
}

/// Defaults plus the caller's overrides, validated as a whole.
fn build_config(settings: Option<&Bound<'_, PyDict>>) -> PyResult<WorkbenchConfig> {
    let mut config = WorkbenchConfig::default();
    if let Some(dict) = settings {
        for (key, value) in dict.iter() {
            let key: String = key.extract()?;
            let value = value.str()?.to_string();
            config.apply_kv(&key, &value).map_err(to_py_err)?;
        }
    }
    config.validate().map_err(to_py_err)?;
    Ok(config)
}

/// Immutable attributed graph.
#[pyclass(frozen)]
struct Graph {
    inner: CoreGraph,
}

#[pymethods]
impl Graph {
    /// Reads a graph JSON file written by this library or the CLI.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Graph {
            inner: cogbd::io::load_graph(&path).map_err(to_py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        cogbd::io::save_graph(&self.inner, &path).map_err(to_py_err)
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.inner.num_nodes()
    }

    #[getter]
    fn num_edges(&self) -> usize {
        self.inner.num_edges()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    #[getter]
    fn feature_dim(&self) -> usize {
        self.inner.feature_dim()
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges().to_vec()
    }

    fn labels(&self) -> Vec<Option<usize>> {
        self.inner.labels().to_vec()
    }

    fn labeled_mask(&self) -> Vec<bool> {
        self.inner.labeled_mask().to_vec()
    }

    fn neighbors(&self, v: usize) -> PyResult<Vec<usize>> {
        if v >= self.inner.num_nodes() {
            return Err(PyValueError::new_err(format!(
                "node {v} out of range for {} nodes",
                self.inner.num_nodes()
            )));
        }
        Ok(self.inner.neighbors(v).to_vec())
    }

    fn features(&self) -> Vec<Vec<f64>> {
        (0..self.inner.num_nodes())
            .map(|v| self.inner.features().row(v).to_vec())
            .collect()
    }

    /// Cosine similarity between a node and its aggregated neighborhood.
    #[pyo3(signature = (v, settings=None))]
    fn feature_homophily(&self, v: usize, settings: Option<&Bound<'_, PyDict>>) -> PyResult<f64> {
        if v >= self.inner.num_nodes() {
            return Err(PyValueError::new_err(format!(
                "node {v} out of range for {} nodes",
                self.inner.num_nodes()
            )));
        }
        let config = build_config(settings)?;
        Ok(feature_homophily(&self.inner, v, &config.homophily))
    }

    fn __repr__(&self) -> String {
        format!(
            "Graph(nodes={}, edges={}, classes={}, feature_dim={})",
            self.inner.num_nodes(),
            self.inner.num_edges(),
            self.inner.num_classes(),
            self.inner.feature_dim()
        )
    }
}

/// Trained node classifier.
#[pyclass(frozen)]
struct Classifier {
    inner: GcnClassifier,
}

#[pymethods]
impl Classifier {
    /// Reads a checkpoint written by `defend` artifacts or the CLI.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let checkpoint = Checkpoint::load(&path).map_err(to_py_err)?;
        Ok(Classifier {
            inner: GcnClassifier::from_checkpoint(&checkpoint).map_err(to_py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.to_checkpoint().save(&path).map_err(to_py_err)
    }

    fn predict(&self, graph: &Graph) -> PyResult<Vec<usize>> {
        self.inner.predict(&graph.inner).map_err(to_py_err)
    }

    fn predict_probs(&self, graph: &Graph) -> PyResult<Vec<Vec<f64>>> {
        let probs = self.inner.predict_probs(&graph.inner).map_err(to_py_err)?;
        Ok((0..probs.rows()).map(|v| probs.row(v).to_vec()).collect())
    }
}

fn truth_dict<'py>(py: Python<'py>, truth: &AttackGroundTruth) -> PyResult<Bound<'py, PyDict>> {
    let dict = PyDict::new(py);
    dict.set_item("attack_kind", truth.attack_kind.as_str())?;
    dict.set_item("target_label", truth.target_label)?;
    dict.set_item("target_nodes", truth.target_nodes.clone())?;
    dict.set_item("trigger_nodes", truth.trigger_nodes.clone())?;
    Ok(dict)
}

/// Generates a synthetic attributed graph from the `synth.*` settings.
#[pyfunction]
#[pyo3(signature = (settings=None))]
fn generate(settings: Option<&Bound<'_, PyDict>>) -> PyResult<Graph> {
    let config = build_config(settings)?;
    let mut spec = config.synth.clone();
    spec.seed = derive_seed(config.seed, "synth");
    Ok(Graph {
        inner: generate_synthetic(&spec).map_err(to_py_err)?,
    })
}

/// Splits a graph into disjoint train and unseen subgraphs, dropping the
/// edges between them. Returns `(train, unseen, poison_candidate_ids)`
/// where the candidate ids index into the unseen graph.
#[pyfunction]
#[pyo3(signature = (graph, settings=None))]
fn split(graph: &Graph, settings: Option<&Bound<'_, PyDict>>) -> PyResult<(Graph, Graph, Vec<usize>)> {
    let config = build_config(settings)?;
    let split = split_inductive(
        &graph.inner,
        config.train_fraction,
        derive_seed(config.seed, "split"),
    )
    .map_err(to_py_err)?;
    Ok((
        Graph { inner: split.train_graph },
        Graph { inner: split.unseen_graph },
        split.unseen_poison_candidate_ids,
    ))
}

/// Poisons a training graph with the configured backdoor attack. Returns
/// the poisoned graph and the ground-truth dict; never hand the truth to
/// the defense.
#[pyfunction]
#[pyo3(signature = (graph, settings=None))]
fn attack<'py>(
    py: Python<'py>,
    graph: &Graph,
    settings: Option<&Bound<'_, PyDict>>,
) -> PyResult<(Graph, Bound<'py, PyDict>)> {
    let config = build_config(settings)?;
    let spec = config.attack.with_seed(derive_seed(config.seed, "attack"));
    let poisoned = spec
        .apply(&graph.inner, config.target_label)
        .map_err(to_py_err)?;
    let truth = truth_dict(py, &poisoned.truth)?;
    Ok((Graph { inner: poisoned.graph }, truth))
}

/// Runs the two-stage defense on a (presumed poisoned) training graph.
/// Takes no ground truth by design. Returns a dict with the detection
/// report fields, the pruned graph, and the robustly trained classifier.
#[pyfunction]
#[pyo3(signature = (graph, settings=None))]
fn defend<'py>(
    py: Python<'py>,
    graph: &Graph,
    settings: Option<&Bound<'_, PyDict>>,
) -> PyResult<Bound<'py, PyDict>> {
    let config = build_config(settings)?;
    let mut defense = DefenseConfig {
        crm: config.crm.clone(),
        detect: config.detect.clone(),
        robust: config.robust.clone(),
    };
    defense.crm.seed = derive_seed(config.seed, "crm");
    defense.robust.seed = derive_seed(config.seed, "robust");
    let outcome = run_defense(&graph.inner, &defense).map_err(to_py_err)?;

    let dict = PyDict::new(py);
    dict.set_item("errors", outcome.report.errors.clone())?;
    dict.set_item("scores", outcome.report.scores.clone())?;
    dict.set_item("mean_error", outcome.report.mean_error)?;
    dict.set_item("std_error", outcome.report.std_error)?;
    dict.set_item("suspects", outcome.report.suspects.clone())?;
    dict.set_item("suspect_targets", outcome.report.suspect_targets.clone())?;
    dict.set_item("suspect_triggers", outcome.report.suspect_triggers.clone())?;
    dict.set_item("pruned_graph", Graph { inner: outcome.pruned_graph })?;
    dict.set_item("classifier", Classifier { inner: outcome.classifier.model })?;
    Ok(dict)
}

/// Accuracy of predictions over `nodes` (default: every labeled node).
#[pyfunction]
#[pyo3(signature = (predictions, graph, nodes=None))]
fn accuracy(predictions: Vec<usize>, graph: &Graph, nodes: Option<Vec<usize>>) -> PyResult<f64> {
    let nodes = nodes.unwrap_or_else(|| (0..graph.inner.num_nodes()).collect());
    eval::accuracy(&predictions, graph.inner.labels(), &nodes).map_err(to_py_err)
}

/// Fraction of triggered candidates predicted as the target class;
/// candidates already of that class are excluded.
#[pyfunction]
fn attack_success_rate(
    predictions: Vec<usize>,
    graph: &Graph,
    candidates: Vec<usize>,
    target_label: usize,
) -> PyResult<f64> {
    eval::attack_success_rate(&predictions, graph.inner.labels(), &candidates, target_label)
        .map_err(to_py_err)
}

/// Feature-homophily statistics per named node group. `groups` maps group
/// names to disjoint node lists; the result is one dict per group, in
/// order, with count/mean/std/min/max.
#[pyfunction]
#[pyo3(signature = (graph, groups, settings=None))]
fn audit<'py>(
    py: Python<'py>,
    graph: &Graph,
    groups: &Bound<'py, PyDict>,
    settings: Option<&Bound<'_, PyDict>>,
) -> PyResult<Bound<'py, PyList>> {
    let config = build_config(settings)?;
    let mut named: Vec<(String, Vec<usize>)> = Vec::new();
    for (name, nodes) in groups.iter() {
        named.push((name.extract()?, nodes.extract()?));
    }
    let report = homophily_audit(&graph.inner, &named, &config.homophily).map_err(to_py_err)?;
    let out = PyList::empty(py);
    for group in &report.groups {
        let dict = PyDict::new(py);
        dict.set_item("name", group.name.clone())?;
        dict.set_item("count", group.count)?;
        dict.set_item("mean", group.mean)?;
        dict.set_item("std", group.std)?;
        dict.set_item("min", group.min)?;
        dict.set_item("max", group.max)?;
        out.append(dict)?;
    }
    Ok(out)
}

fn row_dict<'py>(py: Python<'py>, row: &MetricsRow) -> PyResult<Bound<'py, PyDict>> {
    let dict = PyDict::new(py);
    dict.set_item("run", row.run.clone())?;
    dict.set_item("condition", row.condition.as_str())?;
    dict.set_item("accuracy", row.accuracy)?;
    dict.set_item("asr", row.asr)?;
    dict.set_item("recall_targets", row.recall_targets)?;
    dict.set_item("recall_triggers", row.recall_triggers)?;
    Ok(dict)
}

/// Full multi-repetition experiment over all four training conditions.
/// Returns `{"rows": [...], "means": [...]}` with one dict per metric row.
#[pyfunction]
#[pyo3(signature = (settings=None))]
fn experiment<'py>(py: Python<'py>, settings: Option<&Bound<'_, PyDict>>) -> PyResult<Bound<'py, PyDict>> {
    let config = build_config(settings)?;
    let result = run_experiment(&config, None).map_err(to_py_err)?;
    let rows = PyList::empty(py);
    for row in &result.rows {
        rows.append(row_dict(py, row)?)?;
    }
    let means = PyList::empty(py);
    for row in &result.means {
        means.append(row_dict(py, row)?)?;
    }
    let dict = PyDict::new(py);
    dict.set_item("rows", rows)?;
    dict.set_item("means", means)?;
    Ok(dict)
}

/// Built-in numerical self-checks; returns one dict per check.
#[pyfunction]
fn verify(py: Python<'_>) -> PyResult<Bound<'_, PyList>> {
    let out = PyList::empty(py);
    for check in cogbd::verify::run_all() {
        let dict = PyDict::new(py);
        dict.set_item("name", check.name)?;
        dict.set_item("passed", check.passed)?;
        dict.set_item("detail", check.detail)?;
        out.append(dict)?;
    }
    Ok(out)
}

#[pymodule]
fn cogbd_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Graph>()?;
    m.add_class::<Classifier>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(split, m)?)?;
    m.add_function(wrap_pyfunction!(attack, m)?)?;
    m.add_function(wrap_pyfunction!(defend, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(attack_success_rate, m)?)?;
    m.add_function(wrap_pyfunction!(audit, m)?)?;
    m.add_function(wrap_pyfunction!(experiment, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
