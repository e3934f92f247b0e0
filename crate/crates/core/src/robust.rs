//! Noise-aware classifier training.
//!
//! Stage two of the defense: a two-layer GCN classifier trained on the
//! pruned graph with a reweighted objective. Labeled nodes outside the
//! suspect set keep a confidence weight `(1 - s_i)^a`; suspected poisoned
//! training nodes move into an unlearning term whose weighted loss is
//! subtracted,
//!
//! ```text
//! L = sum_{i in V_L} (1 - s_i)^a * ce_i  -  lambda * sum_{i in V_S} s_i^b * ce_i
//! ```
//!
//! Maximizing cross entropy on a finite label set diverges, so the
//! unlearning gradient is gated once a suspect's label probability falls to
//! the uniform level 1/K.

use crate::detect::DetectionReport;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::io::write_lines;
use crate::linalg::DenseMatrix;
use crate::nn::{gcn_backward, gcn_forward, softmax_ce_row, Checkpoint, LayerParams};
use crate::optim::{AdamConfig, AdamState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// What happens to a suspect's unlearning term once its label probability
/// reaches the uniform level 1/K.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnlearnCap {
    /// Stop the gradient; the reported loss keeps the raw value.
    #[default]
    StopBelowUniform,
    /// Stop the gradient and clamp the reported loss at ln K.
    ClampAtLogK,
    /// No cap. Only safe for short runs and gradient checks; sustained
    /// unlearning diverges.
    Off,
}

impl UnlearnCap {
    pub fn as_str(&self) -> &'static str {
        match self {
            UnlearnCap::StopBelowUniform => "stop_below_uniform",
            UnlearnCap::ClampAtLogK => "clamp_at_log_k",
            UnlearnCap::Off => "off",
        }
    }

    pub fn parse(s: &str) -> Result<UnlearnCap> {
        match s {
            "stop_below_uniform" => Ok(UnlearnCap::StopBelowUniform),
            "clamp_at_log_k" => Ok(UnlearnCap::ClampAtLogK),
            "off" => Ok(UnlearnCap::Off),
            other => Err(Error::InvalidConfig(format!(
                "unknown unlearn cap '{other}', expected stop_below_uniform, clamp_at_log_k, or off"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustConfig {
    pub hidden_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Strength of the unlearning term.
    pub lambda: f64,
    /// Exponent `a` of the confidence weight on labeled nodes.
    pub weight_exp_labeled: f64,
    /// Exponent `b` of the suspicion weight on suspects.
    pub weight_exp_suspect: f64,
    pub unlearn_cap: UnlearnCap,
    pub seed: u64,
}

impl Default for RobustConfig {
    fn default() -> Self {
        RobustConfig {
            hidden_dim: 64,
            epochs: 200,
            learning_rate: 0.01,
            weight_decay: 5e-4,
            lambda: 0.1,
            weight_exp_labeled: 2.0,
            weight_exp_suspect: 2.0,
            unlearn_cap: UnlearnCap::StopBelowUniform,
            seed: 0,
        }
    }
}

impl RobustConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 {
            return Err(Error::InvalidConfig("hidden_dim must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "weight_decay must be nonnegative, got {}",
                self.weight_decay
            )));
        }
        if self.lambda < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "lambda must be nonnegative, got {}",
                self.lambda
            )));
        }
        if !(self.weight_exp_labeled > 0.0 && self.weight_exp_suspect > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "weight exponents must be positive, got a={} b={}",
                self.weight_exp_labeled, self.weight_exp_suspect
            )));
        }
        Ok(())
    }
}

/// Per-node objective weights: `(1 - s)^a` for the supervised term and
/// `s^b` for the unlearning term.
pub fn node_weights(scores: &[f64], a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let w_l = scores.iter().map(|&s| (1.0 - s).powf(a)).collect();
    let w_s = scores.iter().map(|&s| s.powf(b)).collect();
    (w_l, w_s)
}

/// The two objective terms and their combination
/// `total = supervised - lambda * unlearn`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustLossParts {
    pub supervised: f64,
    pub unlearn: f64,
    pub total: f64,
}

/// Objective value and logits gradient over one forward pass.
///
/// `v_l` and `v_s` must be disjoint and every listed node labeled; weights
/// are indexed by node id.
pub fn robust_loss(
    logits: &DenseMatrix,
    labels: &[Option<usize>],
    v_l: &[usize],
    v_s: &[usize],
    w_l: &[f64],
    w_s: &[f64],
    lambda: f64,
    cap: UnlearnCap,
) -> Result<(RobustLossParts, DenseMatrix)> {
    let k = logits.cols();
    if k < 2 {
        return Err(Error::InvalidInput(format!(
            "classifier logits need at least 2 classes, got {k}"
        )));
    }
    let uniform = 1.0 / k as f64;
    let log_k = (k as f64).ln();
    let mut dlogits = DenseMatrix::zeros(logits.rows(), k);
    let mut supervised = 0.0;
    let mut unlearn = 0.0;

    let label_of = |v: usize| -> Result<usize> {
        labels
            .get(v)
            .copied()
            .flatten()
            .ok_or_else(|| Error::InvalidInput(format!("objective references unlabeled node {v}")))
    };

    for &v in v_l {
        let y = label_of(v)?;
        let (ce, probs) = softmax_ce_row(logits.row(v), y);
        supervised += w_l[v] * ce;
        let row = dlogits.row_mut(v);
        for c in 0..k {
            row[c] = w_l[v] * (probs[c] - if c == y { 1.0 } else { 0.0 });
        }
    }
    for &v in v_s {
        let y = label_of(v)?;
        let (ce, probs) = softmax_ce_row(logits.row(v), y);
        let gated = match cap {
            UnlearnCap::Off => false,
            // Both caps stop pushing once the label is at or below chance.
            UnlearnCap::StopBelowUniform | UnlearnCap::ClampAtLogK => probs[y] <= uniform,
        };
        let reported = match cap {
            UnlearnCap::ClampAtLogK => ce.min(log_k),
            _ => ce,
        };
        unlearn += w_s[v] * reported;
        if !gated {
            let row = dlogits.row_mut(v);
            for c in 0..k {
                row[c] = -lambda * w_s[v] * (probs[c] - if c == y { 1.0 } else { 0.0 });
            }
        }
    }
    let total = supervised - lambda * unlearn;
    Ok((
        RobustLossParts {
            supervised,
            unlearn,
            total,
        },
        dlogits,
    ))
}

/// Two-layer GCN node classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnClassifier {
    pub l1: LayerParams,
    pub l2: LayerParams,
}

impl GcnClassifier {
    pub fn init(feature_dim: usize, hidden_dim: usize, num_classes: usize, rng: &mut ChaCha8Rng) -> Self {
        GcnClassifier {
            l1: LayerParams::glorot(feature_dim, hidden_dim, rng),
            l2: LayerParams::glorot(hidden_dim, num_classes, rng),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.l1.weight.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.l2.weight.cols()
    }

    pub fn num_params(&self) -> usize {
        self.l1.num_params() + self.l2.num_params()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.num_params());
        self.l1.push_flat(&mut flat);
        self.l2.push_flat(&mut flat);
        flat
    }

    pub fn read_flat(&mut self, flat: &[f64]) {
        let mut cursor = 0;
        self.l1.read_flat(flat, &mut cursor);
        self.l2.read_flat(flat, &mut cursor);
        assert_eq!(cursor, flat.len(), "flat parameter vector length mismatch");
    }

    pub fn logits(&self, graph: &Graph) -> Result<DenseMatrix> {
        if graph.feature_dim() != self.feature_dim() {
            return Err(Error::DimensionMismatch {
                context: "classifier input",
                expected: format!("{} feature columns", self.feature_dim()),
                found: format!("{} feature columns", graph.feature_dim()),
            });
        }
        let adj = graph.normalized_adjacency();
        Ok(gcn_forward(&adj, graph.features(), &self.l1, &self.l2).h)
    }

    pub fn predict_probs(&self, graph: &Graph) -> Result<DenseMatrix> {
        Ok(crate::nn::softmax_rows(&self.logits(graph)?))
    }

    pub fn predict(&self, graph: &Graph) -> Result<Vec<usize>> {
        Ok(crate::nn::argmax_rows(&self.logits(graph)?))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::new("gcn_classifier");
        ckpt.insert_layer("l1", &self.l1);
        ckpt.insert_layer("l2", &self.l2);
        ckpt
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<GcnClassifier> {
        if ckpt.model != "gcn_classifier" {
            return Err(Error::InvalidInput(format!(
                "checkpoint holds a '{}' model, expected 'gcn_classifier'",
                ckpt.model
            )));
        }
        Ok(GcnClassifier {
            l1: ckpt.layer("l1")?,
            l2: ckpt.layer("l2")?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainedClassifier {
    pub model: GcnClassifier,
    /// Objective parts before each update step, one entry per epoch.
    pub trace: Vec<RobustLossParts>,
}

/// Trains the classifier under the reweighted objective. `V_L` is every
/// labeled node outside the report's suspect targets; `V_S` is the suspect
/// targets. A [`DetectionReport::disabled`] report reproduces plain
/// supervised training exactly.
pub fn train_robust(
    graph: &Graph,
    report: &DetectionReport,
    config: &RobustConfig,
) -> Result<TrainedClassifier> {
    config.validate()?;
    if graph.num_classes() < 2 {
        return Err(Error::InvalidInput(format!(
            "training needs at least 2 classes, got {}",
            graph.num_classes()
        )));
    }
    if report.scores.len() != graph.num_nodes() {
        return Err(Error::DimensionMismatch {
            context: "detection report",
            expected: format!("{} scores", graph.num_nodes()),
            found: format!("{} scores", report.scores.len()),
        });
    }
    let mut suspect_target = vec![false; graph.num_nodes()];
    for &v in &report.suspect_targets {
        if v >= graph.num_nodes() {
            return Err(Error::IndexOutOfRange {
                context: "suspect target",
                index: v,
                len: graph.num_nodes(),
            });
        }
        suspect_target[v] = true;
    }
    let v_l: Vec<usize> = graph
        .labeled_nodes()
        .into_iter()
        .filter(|&v| !suspect_target[v])
        .collect();
    let v_s: Vec<usize> = report
        .suspect_targets
        .iter()
        .copied()
        .filter(|&v| graph.is_labeled(v))
        .collect();
    if v_l.is_empty() {
        return Err(Error::InvalidInput(
            "every labeled node is a suspect target; nothing left to train on".into(),
        ));
    }
    let (w_l, w_s) = node_weights(
        &report.scores,
        config.weight_exp_labeled,
        config.weight_exp_suspect,
    );

    let adj = graph.normalized_adjacency();
    let x = graph.features();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = GcnClassifier::init(
        graph.feature_dim(),
        config.hidden_dim,
        graph.num_classes(),
        &mut rng,
    );
    let mut adam = AdamState::new(
        model.num_params(),
        AdamConfig {
            lr: config.learning_rate,
            weight_decay: config.weight_decay,
            ..AdamConfig::default()
        },
    );
    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let tape = gcn_forward(&adj, x, &model.l1, &model.l2);
        let (parts, dlogits) = robust_loss(
            &tape.h,
            graph.labels(),
            &v_l,
            &v_s,
            &w_l,
            &w_s,
            config.lambda,
            config.unlearn_cap,
        )?;
        if !parts.total.is_finite() {
            return Err(Error::Numeric(format!(
                "training objective became non-finite at epoch {epoch}"
            )));
        }
        trace.push(parts);
        let (g1, g2) = gcn_backward(&adj, x, &model.l2, &tape, &dlogits);
        let mut flat = model.to_flat();
        let mut gflat = Vec::with_capacity(flat.len());
        g1.push_flat(&mut gflat);
        g2.push_flat(&mut gflat);
        adam.step(&mut flat, &gflat);
        model.read_flat(&flat);
    }
    Ok(TrainedClassifier { model, trace })
}

/// Plain supervised training: the robust objective with a neutral report.
pub fn train_plain(graph: &Graph, config: &RobustConfig) -> Result<TrainedClassifier> {
    train_robust(graph, &DetectionReport::disabled(graph.num_nodes()), config)
}

/// Objective trace as CSV, one row per epoch.
pub fn write_trace_csv(trace: &[RobustLossParts], path: &Path) -> Result<()> {
    let mut lines = Vec::with_capacity(trace.len() + 1);
    lines.push("epoch,supervised,unlearn,total".to_string());
    for (epoch, parts) in trace.iter().enumerate() {
        lines.push(format!(
            "{epoch},{},{},{}",
            parts.supervised, parts.unlearn, parts.total
        ));
    }
    write_lines(path, &lines)
}
