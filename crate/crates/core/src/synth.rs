//! Synthetic attributed-graph generation.
//!
//! A stochastic block model supplies the structure: classes are assigned
//! round-robin, same-class pairs draw an edge with `intra_class_edge_prob`,
//! cross-class pairs with `inter_class_edge_prob`. Features are Gaussian
//! around per-class mean vectors: class `k` owns a contiguous block of
//! dimensions set to `class_mean_separation`, everything else is zero, and
//! isotropic noise with `feature_noise_std` is added on top. A stratified
//! `labeled_fraction` of each class becomes visible to training.

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::DenseMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Parameters of the generator. All randomness comes from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_nodes: usize,
    pub num_classes: usize,
    pub intra_class_edge_prob: f64,
    pub inter_class_edge_prob: f64,
    pub feature_dim: usize,
    pub class_mean_separation: f64,
    pub feature_noise_std: f64,
    pub labeled_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_nodes: 1000,
            num_classes: 5,
            intra_class_edge_prob: 0.05,
            inter_class_edge_prob: 0.005,
            feature_dim: 64,
            class_mean_separation: 1.0,
            feature_noise_std: 0.3,
            labeled_fraction: 0.3,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let prob_ok = |p: f64| (0.0..=1.0).contains(&p);
        if self.num_nodes == 0 {
            return Err(Error::InvalidConfig("num_nodes must be positive".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig(format!(
                "num_classes must be at least 2, got {}",
                self.num_classes
            )));
        }
        if self.num_classes > self.num_nodes {
            return Err(Error::InvalidConfig(format!(
                "num_classes {} exceeds num_nodes {}",
                self.num_classes, self.num_nodes
            )));
        }
        if !prob_ok(self.intra_class_edge_prob) || !prob_ok(self.inter_class_edge_prob) {
            return Err(Error::InvalidConfig(format!(
                "edge probabilities must lie in [0, 1], got intra {} inter {}",
                self.intra_class_edge_prob, self.inter_class_edge_prob
            )));
        }
        if self.feature_dim == 0 {
            return Err(Error::InvalidConfig("feature_dim must be positive".into()));
        }
        if self.feature_noise_std < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "feature_noise_std must be nonnegative, got {}",
                self.feature_noise_std
            )));
        }
        if !(self.labeled_fraction > 0.0 && self.labeled_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "labeled_fraction must lie in (0, 1], got {}",
                self.labeled_fraction
            )));
        }
        Ok(())
    }

    /// Mean feature vector of class `k`: its block of dimensions at
    /// `class_mean_separation`, zero elsewhere.
    pub fn class_mean(&self, k: usize) -> Vec<f64> {
        let (lo, hi) = self.class_block(k);
        let mut mean = vec![0.0; self.feature_dim];
        for d in lo..hi {
            mean[d] = self.class_mean_separation;
        }
        mean
    }

    fn class_block(&self, k: usize) -> (usize, usize) {
        let base = self.feature_dim / self.num_classes;
        let lo = k * base;
        let hi = if k + 1 == self.num_classes {
            self.feature_dim
        } else {
            (k + 1) * base
        };
        (lo, hi)
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Graph> {
    spec.validate()?;
    let n = spec.num_nodes;
    let k = spec.num_classes;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let classes: Vec<usize> = (0..n).map(|v| v % k).collect();

    // Edge draws iterate (i, j) with i < j in fixed order for determinism.
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if classes[i] == classes[j] {
                spec.intra_class_edge_prob
            } else {
                spec.inter_class_edge_prob
            };
            if rng.gen::<f64>() < p {
                edges.push((i, j));
            }
        }
    }

    let means: Vec<Vec<f64>> = (0..k).map(|c| spec.class_mean(c)).collect();
    let mut features = DenseMatrix::zeros(n, spec.feature_dim);
    for v in 0..n {
        let mean = &means[classes[v]];
        let row = features.row_mut(v);
        for (d, m) in mean.iter().enumerate() {
            let noise: f64 = rng.sample(StandardNormal);
            row[d] = m + spec.feature_noise_std * noise;
        }
    }

    // Stratified visibility: at least one labeled node per class.
    let mut mask = vec![false; n];
    for c in 0..k {
        let mut members: Vec<usize> = (0..n).filter(|&v| classes[v] == c).collect();
        members.shuffle(&mut rng);
        let want = ((spec.labeled_fraction * members.len() as f64).round() as usize)
            .clamp(1, members.len());
        for &v in &members[..want] {
            mask[v] = true;
        }
    }

    let labels = classes.iter().map(|&c| Some(c)).collect();
    Graph::build(n, &edges, features, labels, mask, k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SyntheticSpec {
        SyntheticSpec {
            num_nodes: 60,
            num_classes: 3,
            intra_class_edge_prob: 0.2,
            inter_class_edge_prob: 0.05,
            feature_dim: 12,
            class_mean_separation: 1.0,
            feature_noise_std: 0.2,
            labeled_fraction: 0.5,
            seed: 1,
        }
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let spec = small_spec();
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&SyntheticSpec { seed: 2, ..spec }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_noise_collapses_class_features() {
        let spec = SyntheticSpec {
            feature_noise_std: 0.0,
            ..small_spec()
        };
        let g = generate_synthetic(&spec).unwrap();
        // All nodes of one class share the exact mean row.
        for v in 0..g.num_nodes() {
            let c = g.label(v).unwrap();
            assert_eq!(g.features().row(v), spec.class_mean(c).as_slice());
        }
    }

    #[test]
    fn equal_probabilities_remove_class_structure() {
        // With intra == inter the same-class and cross-class edge densities
        // agree up to binomial noise; compare pooled estimates over 10 seeds
        // against a 3-sigma band.
        let p = 0.1;
        let mut same_edges = 0usize;
        let mut cross_edges = 0usize;
        let mut same_pairs = 0usize;
        let mut cross_pairs = 0usize;
        for seed in 0..10 {
            let spec = SyntheticSpec {
                intra_class_edge_prob: p,
                inter_class_edge_prob: p,
                seed,
                ..small_spec()
            };
            let g = generate_synthetic(&spec).unwrap();
            for i in 0..g.num_nodes() {
                for j in (i + 1)..g.num_nodes() {
                    let same = g.label(i) == g.label(j);
                    if same {
                        same_pairs += 1;
                    } else {
                        cross_pairs += 1;
                    }
                    if g.neighbors(i).binary_search(&j).is_ok() {
                        if same {
                            same_edges += 1;
                        } else {
                            cross_edges += 1;
                        }
                    }
                }
            }
        }
        let p_same = same_edges as f64 / same_pairs as f64;
        let p_cross = cross_edges as f64 / cross_pairs as f64;
        let sigma =
            (p * (1.0 - p) * (1.0 / same_pairs as f64 + 1.0 / cross_pairs as f64)).sqrt();
        assert!(
            (p_same - p_cross).abs() <= 3.0 * sigma,
            "density gap {} exceeds 3 sigma {}",
            (p_same - p_cross).abs(),
            sigma
        );
    }

    #[test]
    fn labeled_fraction_is_stratified() {
        let g = generate_synthetic(&small_spec()).unwrap();
        for c in 0..3 {
            let members: Vec<usize> = (0..g.num_nodes())
                .filter(|&v| g.label(v) == Some(c))
                .collect();
            let labeled = members.iter().filter(|&&v| g.is_labeled(v)).count();
            assert_eq!(labeled, (members.len() as f64 * 0.5).round() as usize);
        }
    }

    #[test]
    fn tiny_labeled_fraction_keeps_one_node_per_class() {
        let spec = SyntheticSpec {
            labeled_fraction: 0.01,
            ..small_spec()
        };
        let g = generate_synthetic(&spec).unwrap();
        for c in 0..3 {
            let labeled = (0..g.num_nodes())
                .filter(|&v| g.label(v) == Some(c) && g.is_labeled(v))
                .count();
            assert!(labeled >= 1);
        }
    }

    #[test]
    fn invalid_probability_rejected() {
        let spec = SyntheticSpec {
            intra_class_edge_prob: 1.5,
            ..small_spec()
        };
        assert!(matches!(
            generate_synthetic(&spec).unwrap_err(),
            Error::InvalidConfig(_)
        ));
    }
}
