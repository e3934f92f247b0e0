//! Layers and manual forward/backward passes for the two fixed architectures
//! used throughout the workbench: a two-layer graph convolution stack and a
//! two-layer MLP (ReLU hidden, linear output).
//!
//! Backward passes are straight-line reversals of the forward code against
//! cached activations, so replaying one is pure and yields identical
//! gradients every time. The graph convolution backward assumes a symmetric
//! propagation matrix, which the renormalized adjacency always is.

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, SparseMatrix};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// Weight matrix (`fan_in x fan_out`) plus bias vector. Doubles as the
/// gradient container since gradients share the same shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weight: DenseMatrix,
    pub bias: Vec<f64>,
}

impl LayerParams {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        LayerParams {
            weight: DenseMatrix::zeros(fan_in, fan_out),
            bias: vec![0.0; fan_out],
        }
    }

    /// Seeded uniform init in `±sqrt(6 / (fan_in + fan_out))`; biases start at
    /// zero. Weight entries are drawn row-major.
    pub fn glorot(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        LayerParams {
            weight: DenseMatrix::from_vec(
                fan_in,
                fan_out,
                (0..fan_in * fan_out)
                    .map(|_| rng.gen_range(-bound..=bound))
                    .collect(),
            ),
            bias: vec![0.0; fan_out],
        }
    }

    pub fn num_params(&self) -> usize {
        self.weight.rows() * self.weight.cols() + self.bias.len()
    }

    pub fn push_flat(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(self.weight.data());
        out.extend_from_slice(&self.bias);
    }

    pub fn read_flat(&mut self, flat: &[f64], cursor: &mut usize) {
        let w = self.weight.rows() * self.weight.cols();
        self.weight.data_mut().copy_from_slice(&flat[*cursor..*cursor + w]);
        *cursor += w;
        let b = self.bias.len();
        self.bias.copy_from_slice(&flat[*cursor..*cursor + b]);
        *cursor += b;
    }
}

fn relu(m: &DenseMatrix) -> DenseMatrix {
    m.mapped(|v| v.max(0.0))
}

// Subgradient 0 at exactly 0: mask strictly positive pre-activations.
fn relu_mask(pre: &DenseMatrix, grad: &DenseMatrix) -> DenseMatrix {
    let mut out = grad.clone();
    for (g, &z) in out.data_mut().iter_mut().zip(pre.data()) {
        if z <= 0.0 {
            *g = 0.0;
        }
    }
    out
}

/// Cached activations of `H = S * relu(S * X * W1 + b1) * W2 + b2`.
#[derive(Debug, Clone)]
pub struct GcnTape {
    /// Pre-activation of the first layer.
    pub z1: DenseMatrix,
    /// Hidden activations after ReLU.
    pub h1: DenseMatrix,
    /// Final (linear) output.
    pub h: DenseMatrix,
}

pub fn gcn_forward(
    adj: &SparseMatrix,
    x: &DenseMatrix,
    l1: &LayerParams,
    l2: &LayerParams,
) -> GcnTape {
    let mut z1 = adj.spmm(&x.matmul(&l1.weight));
    z1.add_row_vector(&l1.bias);
    let h1 = relu(&z1);
    let mut h = adj.spmm(&h1.matmul(&l2.weight));
    h.add_row_vector(&l2.bias);
    GcnTape { z1, h1, h }
}

/// Exact gradients of the two layers given `d loss / d H`.
pub fn gcn_backward(
    adj: &SparseMatrix,
    x: &DenseMatrix,
    l2: &LayerParams,
    tape: &GcnTape,
    dh: &DenseMatrix,
) -> (LayerParams, LayerParams) {
    debug_assert!(adj.is_symmetric(1e-12), "propagation matrix must be symmetric");
    let db2 = dh.col_sums();
    let da2 = adj.spmm(dh);
    let dw2 = tape.h1.transpose_matmul(&da2);
    let dh1 = da2.matmul_transpose(&l2.weight);
    let dz1 = relu_mask(&tape.z1, &dh1);
    let db1 = dz1.col_sums();
    let da1 = adj.spmm(&dz1);
    let dw1 = x.transpose_matmul(&da1);
    (
        LayerParams { weight: dw1, bias: db1 },
        LayerParams { weight: dw2, bias: db2 },
    )
}

/// Cached activations of `Out = relu(X * W1 + b1) * W2 + b2`.
#[derive(Debug, Clone)]
pub struct MlpTape {
    pub z1: DenseMatrix,
    pub r1: DenseMatrix,
    pub out: DenseMatrix,
}

pub fn mlp_forward(x: &DenseMatrix, l1: &LayerParams, l2: &LayerParams) -> MlpTape {
    let mut z1 = x.matmul(&l1.weight);
    z1.add_row_vector(&l1.bias);
    let r1 = relu(&z1);
    let mut out = r1.matmul(&l2.weight);
    out.add_row_vector(&l2.bias);
    MlpTape { z1, r1, out }
}

/// Layer gradients plus the gradient with respect to the input, which feeds
/// the encoder when the MLP acts as a decoder head.
pub fn mlp_backward(
    x: &DenseMatrix,
    l1: &LayerParams,
    l2: &LayerParams,
    tape: &MlpTape,
    dout: &DenseMatrix,
) -> (LayerParams, LayerParams, DenseMatrix) {
    let db2 = dout.col_sums();
    let dw2 = tape.r1.transpose_matmul(dout);
    let dr1 = dout.matmul_transpose(&l2.weight);
    let dz1 = relu_mask(&tape.z1, &dr1);
    let db1 = dz1.col_sums();
    let dw1 = x.transpose_matmul(&dz1);
    let dx = dz1.matmul_transpose(&l1.weight);
    (
        LayerParams { weight: dw1, bias: db1 },
        LayerParams { weight: dw2, bias: db2 },
        dx,
    )
}

/// Probability floor applied before every logarithm.
pub const PROB_FLOOR: f64 = 1e-300;

/// Numerically stable row softmax (max-subtraction).
pub fn softmax_rows(logits: &DenseMatrix) -> DenseMatrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Cross-entropy of one softmax row against a hard label.
pub fn cross_entropy_row(probs_row: &[f64], label: usize) -> f64 {
    -probs_row[label].max(PROB_FLOOR).ln()
}

/// Stable per-row softmax cross-entropy; returns the loss and the
/// probability row in one pass.
pub fn softmax_ce_row(logits_row: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits_row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut probs: Vec<f64> = logits_row.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= sum;
    }
    (cross_entropy_row(&probs, label), probs)
}

/// Predicted class per row; ties resolve to the lowest class index.
pub fn argmax_rows(logits: &DenseMatrix) -> Vec<usize> {
    (0..logits.rows())
        .map(|r| {
            let row = logits.row(r);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Named-tensor checkpoint. Tensor names are sorted in the file, and values
/// round-trip bit-exactly, so saving the same model twice gives identical
/// bytes.
#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub model: String,
    pub tensors: BTreeMap<String, Tensor>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Tensor {
    Matrix { rows: usize, cols: usize, data: Vec<f64> },
    Vector { data: Vec<f64> },
    Scalar { value: f64 },
    Text { value: String },
}

impl Checkpoint {
    pub fn new(model: impl Into<String>) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            model: model.into(),
            tensors: BTreeMap::new(),
        }
    }

    pub fn insert_layer(&mut self, name: &str, layer: &LayerParams) {
        self.tensors.insert(
            format!("{name}.weight"),
            Tensor::Matrix {
                rows: layer.weight.rows(),
                cols: layer.weight.cols(),
                data: layer.weight.data().to_vec(),
            },
        );
        self.tensors.insert(
            format!("{name}.bias"),
            Tensor::Vector { data: layer.bias.clone() },
        );
    }

    pub fn insert_scalar(&mut self, name: &str, value: f64) {
        self.tensors.insert(name.to_string(), Tensor::Scalar { value });
    }

    pub fn insert_text(&mut self, name: &str, value: &str) {
        self.tensors
            .insert(name.to_string(), Tensor::Text { value: value.to_string() });
    }

    pub fn layer(&self, name: &str) -> Result<LayerParams> {
        let weight = match self.tensors.get(&format!("{name}.weight")) {
            Some(Tensor::Matrix { rows, cols, data }) => {
                DenseMatrix::from_vec(*rows, *cols, data.clone())
            }
            _ => {
                return Err(Error::InvalidInput(format!(
                    "checkpoint is missing matrix tensor '{name}.weight'"
                )))
            }
        };
        let bias = match self.tensors.get(&format!("{name}.bias")) {
            Some(Tensor::Vector { data }) => data.clone(),
            _ => {
                return Err(Error::InvalidInput(format!(
                    "checkpoint is missing vector tensor '{name}.bias'"
                )))
            }
        };
        Ok(LayerParams {
            weight,
            bias,
        })
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        match self.tensors.get(name) {
            Some(Tensor::Scalar { value }) => Ok(*value),
            _ => Err(Error::InvalidInput(format!(
                "checkpoint is missing scalar tensor '{name}'"
            ))),
        }
    }

    pub fn text(&self, name: &str) -> Result<&str> {
        match self.tensors.get(name) {
            Some(Tensor::Text { value }) => Ok(value),
            _ => Err(Error::InvalidInput(format!(
                "checkpoint is missing text tensor '{name}'"
            ))),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_json(self, path)
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let ckpt: Checkpoint = crate::io::read_json(path)?;
        if ckpt.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::parse(
                path,
                format!(
                    "unsupported checkpoint format_version {} (expected {CHECKPOINT_FORMAT_VERSION})",
                    ckpt.format_version
                ),
            ));
        }
        Ok(ckpt)
    }
}
