//! Consistency reconstruction model.
//!
//! A two-layer GCN encoder maps features to embeddings Z; two MLP decoder
//! heads reconstruct, per node, the node's own feature row and its
//! aggregated neighborhood row M = aggr(A, X). Training minimizes
//!
//! ```text
//! L = ||X - X_hat||_F^2 + alpha ||M - M_hat||_F^2 + beta ||X - M_hat||_F^2
//! ```
//!
//! The third term ties the neighborhood reconstruction back to the node's
//! own features, so nodes whose neighborhoods disagree with them (the
//! signature of an attached trigger) reconstruct badly. Per-node errors are
//! the row-wise decomposition of L and sum to it exactly; detection ranks
//! them downstream.

use crate::error::{Error, Result};
use crate::graph::{Aggregation, Graph};
use crate::linalg::{DenseMatrix, SparseMatrix};
use crate::nn::{
    gcn_backward, gcn_forward, mlp_backward, mlp_forward, Checkpoint, GcnTape, LayerParams, MlpTape,
};
use crate::optim::{AdamConfig, AdamState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrmConfig {
    pub hidden_dim: usize,
    /// Weight of the neighborhood reconstruction term.
    pub alpha: f64,
    /// Weight of the cross term tying M_hat to X.
    pub beta: f64,
    pub aggregation: Aggregation,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for CrmConfig {
    fn default() -> Self {
        CrmConfig {
            hidden_dim: 64,
            alpha: 1.0,
            beta: 1.0,
            aggregation: Aggregation::Sum,
            epochs: 200,
            learning_rate: 0.01,
            weight_decay: 5e-4,
            seed: 0,
        }
    }
}

impl CrmConfig {
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
        if self.alpha < 0.0 || self.beta < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "loss weights must be nonnegative, got alpha={} beta={}",
                self.alpha, self.beta
            )));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "weight_decay must be nonnegative, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// Encoder/decoder parameters plus the loss weights they were trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct CrmModel {
    pub enc1: LayerParams,
    pub enc2: LayerParams,
    pub dec_node1: LayerParams,
    pub dec_node2: LayerParams,
    pub dec_neigh1: LayerParams,
    pub dec_neigh2: LayerParams,
    pub alpha: f64,
    pub beta: f64,
    pub aggregation: Aggregation,
}

/// Forward activations of one CRM pass.
#[derive(Debug, Clone)]
pub struct CrmTape {
    pub gcn: GcnTape,
    pub node: MlpTape,
    pub neigh: MlpTape,
}

impl CrmTape {
    pub fn embeddings(&self) -> &DenseMatrix {
        &self.gcn.h
    }

    pub fn x_hat(&self) -> &DenseMatrix {
        &self.node.out
    }

    pub fn m_hat(&self) -> &DenseMatrix {
        &self.neigh.out
    }
}

/// Parameter gradients, mirroring the model layout.
#[derive(Debug, Clone)]
pub struct CrmGrads {
    pub enc1: LayerParams,
    pub enc2: LayerParams,
    pub dec_node1: LayerParams,
    pub dec_node2: LayerParams,
    pub dec_neigh1: LayerParams,
    pub dec_neigh2: LayerParams,
}

impl CrmModel {
    /// Glorot initialization; draw order is fixed (encoder, node decoder,
    /// neighborhood decoder) so checkpoints replay bit for bit.
    pub fn init(feature_dim: usize, config: &CrmConfig, rng: &mut ChaCha8Rng) -> CrmModel {
        let h = config.hidden_dim;
        CrmModel {
            enc1: LayerParams::glorot(feature_dim, h, rng),
            enc2: LayerParams::glorot(h, h, rng),
            dec_node1: LayerParams::glorot(h, h, rng),
            dec_node2: LayerParams::glorot(h, feature_dim, rng),
            dec_neigh1: LayerParams::glorot(h, h, rng),
            dec_neigh2: LayerParams::glorot(h, feature_dim, rng),
            alpha: config.alpha,
            beta: config.beta,
            aggregation: config.aggregation,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.enc1.weight.rows()
    }

    fn layers(&self) -> [&LayerParams; 6] {
        [
            &self.enc1,
            &self.enc2,
            &self.dec_node1,
            &self.dec_node2,
            &self.dec_neigh1,
            &self.dec_neigh2,
        ]
    }

    fn layers_mut(&mut self) -> [&mut LayerParams; 6] {
        [
            &mut self.enc1,
            &mut self.enc2,
            &mut self.dec_node1,
            &mut self.dec_node2,
            &mut self.dec_neigh1,
            &mut self.dec_neigh2,
        ]
    }

    pub fn num_params(&self) -> usize {
        self.layers().iter().map(|l| l.num_params()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.num_params());
        for l in self.layers() {
            l.push_flat(&mut flat);
        }
        flat
    }

    pub fn read_flat(&mut self, flat: &[f64]) {
        let mut cursor = 0;
        for l in self.layers_mut() {
            l.read_flat(flat, &mut cursor);
        }
        assert_eq!(cursor, flat.len(), "flat parameter vector length mismatch");
    }

    pub fn forward(&self, adj: &SparseMatrix, x: &DenseMatrix) -> CrmTape {
        let gcn = gcn_forward(adj, x, &self.enc1, &self.enc2);
        let node = mlp_forward(&gcn.h, &self.dec_node1, &self.dec_node2);
        let neigh = mlp_forward(&gcn.h, &self.dec_neigh1, &self.dec_neigh2);
        CrmTape { gcn, node, neigh }
    }

    /// Row-wise reconstruction errors. Summing this vector reproduces the
    /// training loss exactly, since the loss is computed the same way.
    pub fn per_node_errors(&self, x: &DenseMatrix, m: &DenseMatrix, tape: &CrmTape) -> Vec<f64> {
        (0..x.rows())
            .map(|i| {
                x.row_sq_diff(tape.x_hat(), i)
                    + self.alpha * m.row_sq_diff(tape.m_hat(), i)
                    + self.beta * x.row_sq_diff(tape.m_hat(), i)
            })
            .collect()
    }

    pub fn loss(&self, x: &DenseMatrix, m: &DenseMatrix, tape: &CrmTape) -> f64 {
        self.per_node_errors(x, m, tape).iter().sum()
    }

    pub fn backward(
        &self,
        adj: &SparseMatrix,
        x: &DenseMatrix,
        m: &DenseMatrix,
        tape: &CrmTape,
    ) -> CrmGrads {
        // d L / d X_hat = 2 (X_hat - X)
        let mut d_xhat = tape.x_hat().sub(x);
        d_xhat.scale_in_place(2.0);
        // d L / d M_hat = 2 alpha (M_hat - M) + 2 beta (M_hat - X)
        let mut d_mhat = tape.m_hat().sub(m);
        d_mhat.scale_in_place(2.0 * self.alpha);
        let mut cross = tape.m_hat().sub(x);
        cross.scale_in_place(2.0 * self.beta);
        d_mhat.add_in_place(&cross);

        let z = tape.embeddings();
        let (gn1, gn2, dz_node) =
            mlp_backward(z, &self.dec_node1, &self.dec_node2, &tape.node, &d_xhat);
        let (gm1, gm2, mut dz) =
            mlp_backward(z, &self.dec_neigh1, &self.dec_neigh2, &tape.neigh, &d_mhat);
        dz.add_in_place(&dz_node);
        let (ge1, ge2) = gcn_backward(adj, x, &self.enc2, &tape.gcn, &dz);
        CrmGrads {
            enc1: ge1,
            enc2: ge2,
            dec_node1: gn1,
            dec_node2: gn2,
            dec_neigh1: gm1,
            dec_neigh2: gm2,
        }
    }

    /// Per-node errors on a graph, running a fresh forward pass.
    pub fn node_errors(&self, graph: &Graph) -> Result<Vec<f64>> {
        if graph.feature_dim() != self.feature_dim() {
            return Err(Error::DimensionMismatch {
                context: "reconstruction input",
                expected: format!("{} feature columns", self.feature_dim()),
                found: format!("{} feature columns", graph.feature_dim()),
            });
        }
        let adj = graph.normalized_adjacency();
        let x = graph.features();
        let m = graph.aggregate(x, self.aggregation);
        let tape = self.forward(&adj, x);
        Ok(self.per_node_errors(x, &m, &tape))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::new("crm");
        ckpt.insert_layer("enc1", &self.enc1);
        ckpt.insert_layer("enc2", &self.enc2);
        ckpt.insert_layer("dec_node1", &self.dec_node1);
        ckpt.insert_layer("dec_node2", &self.dec_node2);
        ckpt.insert_layer("dec_neigh1", &self.dec_neigh1);
        ckpt.insert_layer("dec_neigh2", &self.dec_neigh2);
        ckpt.insert_scalar("alpha", self.alpha);
        ckpt.insert_scalar("beta", self.beta);
        ckpt.insert_text("aggregation", self.aggregation.as_str());
        ckpt
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<CrmModel> {
        if ckpt.model != "crm" {
            return Err(Error::InvalidInput(format!(
                "checkpoint holds a '{}' model, expected 'crm'",
                ckpt.model
            )));
        }
        Ok(CrmModel {
            enc1: ckpt.layer("enc1")?,
            enc2: ckpt.layer("enc2")?,
            dec_node1: ckpt.layer("dec_node1")?,
            dec_node2: ckpt.layer("dec_node2")?,
            dec_neigh1: ckpt.layer("dec_neigh1")?,
            dec_neigh2: ckpt.layer("dec_neigh2")?,
            alpha: ckpt.scalar("alpha")?,
            beta: ckpt.scalar("beta")?,
            aggregation: Aggregation::parse(ckpt.text("aggregation")?)?,
        })
    }
}

fn grads_to_flat(grads: &CrmGrads, capacity: usize) -> Vec<f64> {
    let mut flat = Vec::with_capacity(capacity);
    for l in [
        &grads.enc1,
        &grads.enc2,
        &grads.dec_node1,
        &grads.dec_node2,
        &grads.dec_neigh1,
        &grads.dec_neigh2,
    ] {
        l.push_flat(&mut flat);
    }
    flat
}

#[derive(Debug, Clone)]
pub struct TrainedCrm {
    pub model: CrmModel,
    /// Loss before each update step, one entry per epoch.
    pub loss_trace: Vec<f64>,
}

/// Full-batch CRM training on the given (typically backdoored) graph.
pub fn train_crm(graph: &Graph, config: &CrmConfig) -> Result<TrainedCrm> {
    config.validate()?;
    let adj = graph.normalized_adjacency();
    let x = graph.features();
    let m = graph.aggregate(x, config.aggregation);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = CrmModel::init(graph.feature_dim(), config, &mut rng);
    let mut adam = AdamState::new(
        model.num_params(),
        AdamConfig {
            lr: config.learning_rate,
            weight_decay: config.weight_decay,
            ..AdamConfig::default()
        },
    );
    let mut loss_trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let tape = model.forward(&adj, x);
        let loss = model.loss(x, &m, &tape);
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "reconstruction loss became non-finite at epoch {epoch}"
            )));
        }
        loss_trace.push(loss);
        let grads = model.backward(&adj, x, &m, &tape);
        let mut flat = model.to_flat();
        let gflat = grads_to_flat(&grads, flat.len());
        adam.step(&mut flat, &gflat);
        model.read_flat(&flat);
    }
    Ok(TrainedCrm { model, loss_trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{finite_difference_gradient, max_relative_error};
    use crate::synth::{generate_synthetic, SyntheticSpec};
    use tempfile::tempdir;

    fn tiny_graph() -> Graph {
        generate_synthetic(&SyntheticSpec {
            num_nodes: 8,
            num_classes: 2,
            feature_dim: 4,
            intra_class_edge_prob: 0.6,
            inter_class_edge_prob: 0.2,
            labeled_fraction: 0.5,
            seed: 3,
            ..SyntheticSpec::default()
        })
        .unwrap()
    }

    fn small_config() -> CrmConfig {
        CrmConfig {
            hidden_dim: 3,
            alpha: 0.7,
            beta: 0.4,
            epochs: 5,
            ..CrmConfig::default()
        }
    }

    #[test]
    fn zero_model_loss_matches_hand_computation() {
        // With all parameters zero both reconstructions are zero, so the
        // loss reduces to ||X||^2 + alpha ||M||^2 + beta ||X||^2.
        let features = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let g = Graph::build(2, &[(0, 1)], features, vec![None, None], vec![false, false], 0)
            .unwrap();
        let model = CrmModel {
            enc1: LayerParams::zeros(2, 3),
            enc2: LayerParams::zeros(3, 3),
            dec_node1: LayerParams::zeros(3, 3),
            dec_node2: LayerParams::zeros(3, 2),
            dec_neigh1: LayerParams::zeros(3, 3),
            dec_neigh2: LayerParams::zeros(3, 2),
            alpha: 0.5,
            beta: 0.25,
            aggregation: Aggregation::Sum,
        };
        let errors = model.node_errors(&g).unwrap();
        // e_0 = 5 + 0.5 * 25 + 0.25 * 5, e_1 = 25 + 0.5 * 5 + 0.25 * 25.
        assert_eq!(errors, vec![18.75, 33.75]);
    }

    #[test]
    fn per_node_errors_sum_to_loss_exactly() {
        let g = tiny_graph();
        let trained = train_crm(&g, &small_config()).unwrap();
        let adj = g.normalized_adjacency();
        let m = g.aggregate(g.features(), trained.model.aggregation);
        let tape = trained.model.forward(&adj, g.features());
        let errors = trained.model.per_node_errors(g.features(), &m, &tape);
        let loss = trained.model.loss(g.features(), &m, &tape);
        let sum: f64 = errors.iter().sum();
        assert_eq!(sum, loss);
    }

    #[test]
    fn gradients_match_finite_differences() {
        for aggregation in [Aggregation::Sum, Aggregation::Mean] {
            let g = tiny_graph();
            let config = CrmConfig {
                aggregation,
                ..small_config()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let model = CrmModel::init(g.feature_dim(), &config, &mut rng);
            let adj = g.normalized_adjacency();
            let x = g.features();
            let m = g.aggregate(x, aggregation);

            let tape = model.forward(&adj, x);
            let grads = model.backward(&adj, x, &m, &tape);
            let analytic = grads_to_flat(&grads, model.num_params());

            let flat0 = model.to_flat();
            let numeric = finite_difference_gradient(
                |p| {
                    let mut probe = model.clone();
                    probe.read_flat(p);
                    let t = probe.forward(&adj, x);
                    probe.loss(x, &m, &t)
                },
                &flat0,
                1e-5,
            );
            let err = max_relative_error(&analytic, &numeric);
            assert!(err < 1e-6, "gradient mismatch {err} for {aggregation:?}");
        }
    }

    #[test]
    fn training_reduces_loss() {
        let g = tiny_graph();
        let config = CrmConfig {
            epochs: 60,
            ..small_config()
        };
        let trained = train_crm(&g, &config).unwrap();
        assert_eq!(trained.loss_trace.len(), 60);
        assert!(trained.loss_trace[59] < trained.loss_trace[0]);
    }

    #[test]
    fn training_is_deterministic() {
        let g = tiny_graph();
        let a = train_crm(&g, &small_config()).unwrap();
        let b = train_crm(&g, &small_config()).unwrap();
        assert_eq!(a.loss_trace, b.loss_trace);
        assert_eq!(a.model.to_flat(), b.model.to_flat());
        let c = train_crm(
            &g,
            &CrmConfig {
                seed: 1,
                ..small_config()
            },
        )
        .unwrap();
        assert_ne!(a.model.to_flat(), c.model.to_flat());
    }

    #[test]
    fn checkpoint_roundtrip_preserves_model() {
        let g = tiny_graph();
        let trained = train_crm(&g, &small_config()).unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("crm.json");
        trained.model.to_checkpoint().save(&path).unwrap();
        let restored = CrmModel::from_checkpoint(&Checkpoint::load(&path).unwrap()).unwrap();
        assert_eq!(restored, trained.model);
        assert_eq!(
            restored.node_errors(&g).unwrap(),
            trained.model.node_errors(&g).unwrap()
        );
    }

    #[test]
    fn non_finite_input_is_reported() {
        let mut features = DenseMatrix::zeros(3, 2);
        features.set(0, 0, f64::NAN);
        let g = Graph::build(
            3,
            &[(0, 1), (1, 2)],
            features,
            vec![None; 3],
            vec![false; 3],
            0,
        )
        .unwrap();
        let err = train_crm(&g, &small_config()).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let g = tiny_graph();
        let trained = train_crm(&g, &small_config()).unwrap();
        let other = generate_synthetic(&SyntheticSpec {
            num_nodes: 8,
            num_classes: 2,
            feature_dim: 6,
            seed: 3,
            ..SyntheticSpec::default()
        })
        .unwrap();
        assert!(matches!(
            trained.model.node_errors(&other).unwrap_err(),
            Error::DimensionMismatch { .. }
        ));
    }
}
