//! Backdoor injection.
//!
//! Two families are implemented against a clean training graph:
//!
//! - subgraph triggers: per target, a small clique of new nodes is appended
//!   and connected to the target by exactly one bridge edge, with trigger
//!   features drawn by one of three modes;
//! - feature triggers: a fixed set of dimensions of each target's own
//!   feature row is overwritten with a fixed value, adding no nodes/edges.
//!
//! Either way the targets are relabeled to the attack's target class and
//! marked labeled, which is the supervision that implants the backdoor. The
//! exact poisoned sets are recorded in an [`AttackGroundTruth`] sidecar that
//! only evaluation code may consume; the defense never sees it.

use crate::config::derive_seed;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::DenseMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    SubgraphRandom,
    SubgraphSimilar,
    SubgraphInDistribution,
    Feature,
}

impl AttackKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AttackKind::SubgraphRandom => "subgraph_random",
            AttackKind::SubgraphSimilar => "subgraph_similar",
            AttackKind::SubgraphInDistribution => "subgraph_in_distribution",
            AttackKind::Feature => "feature",
        }
    }
}

/// How subgraph trigger nodes get their feature rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerFeatureMode {
    /// I.i.d. uniform over the observed feature range; deliberately
    /// out-of-distribution.
    Random,
    /// The anchored node's own row plus Gaussian noise; evades similarity
    /// filters.
    TargetSimilar,
    /// Rows resampled from clean nodes of the target class; blends into the
    /// data distribution.
    InDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgraphAttackSpec {
    pub num_targets: usize,
    /// Trigger nodes appended per target; they form a clique with one
    /// bridge edge to the target.
    pub trigger_size: usize,
    pub feature_mode: TriggerFeatureMode,
    /// Noise scale for [`TriggerFeatureMode::TargetSimilar`].
    pub similar_noise_std: f64,
    pub seed: u64,
}

impl Default for SubgraphAttackSpec {
    fn default() -> Self {
        SubgraphAttackSpec {
            num_targets: 5,
            trigger_size: 3,
            feature_mode: TriggerFeatureMode::Random,
            similar_noise_std: 0.01,
            seed: 0,
        }
    }
}

impl SubgraphAttackSpec {
    pub fn kind(&self) -> AttackKind {
        match self.feature_mode {
            TriggerFeatureMode::Random => AttackKind::SubgraphRandom,
            TriggerFeatureMode::TargetSimilar => AttackKind::SubgraphSimilar,
            TriggerFeatureMode::InDistribution => AttackKind::SubgraphInDistribution,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.num_targets == 0 {
            return Err(Error::InvalidConfig("num_targets must be positive".into()));
        }
        if self.trigger_size == 0 {
            return Err(Error::InvalidConfig("trigger_size must be positive".into()));
        }
        if self.similar_noise_std < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "similar_noise_std must be nonnegative, got {}",
                self.similar_noise_std
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureAttackSpec {
    pub num_targets: usize,
    /// Value written into the trigger dimensions; `None` means the global
    /// maximum absolute feature value of the attacked graph.
    pub trigger_value: Option<f64>,
    pub seed: u64,
}

impl Default for FeatureAttackSpec {
    fn default() -> Self {
        FeatureAttackSpec {
            num_targets: 20,
            trigger_value: None,
            seed: 0,
        }
    }
}

impl FeatureAttackSpec {
    fn validate(&self) -> Result<()> {
        if self.num_targets == 0 {
            return Err(Error::InvalidConfig("num_targets must be positive".into()));
        }
        Ok(())
    }
}

/// Either attack family, as configured for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum AttackSpec {
    Subgraph(SubgraphAttackSpec),
    Feature(FeatureAttackSpec),
}

impl AttackSpec {
    pub fn kind(&self) -> AttackKind {
        match self {
            AttackSpec::Subgraph(s) => s.kind(),
            AttackSpec::Feature(_) => AttackKind::Feature,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            AttackSpec::Subgraph(s) => s.seed,
            AttackSpec::Feature(s) => s.seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> AttackSpec {
        let mut spec = self.clone();
        match &mut spec {
            AttackSpec::Subgraph(s) => s.seed = seed,
            AttackSpec::Feature(s) => s.seed = seed,
        }
        spec
    }

    /// Runs the configured attack against a training graph.
    pub fn apply(&self, graph: &Graph, y_t: usize) -> Result<PoisonedGraph> {
        match self {
            AttackSpec::Subgraph(s) => inject_subgraph_trigger(graph, s, y_t),
            AttackSpec::Feature(s) => inject_feature_trigger(graph, s, y_t),
        }
    }
}

/// Dimensions and value of an injected feature trigger; carried in the truth
/// sidecar so the identical pattern can be applied to unseen candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTriggerInfo {
    pub dims: Vec<usize>,
    pub value: f64,
}

/// Evaluation-only record of what the attack actually poisoned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackGroundTruth {
    pub attack_kind: AttackKind,
    pub target_label: usize,
    /// Pre-existing nodes that were relabeled to the target class.
    pub target_nodes: Vec<usize>,
    /// Appended trigger nodes; empty for feature attacks.
    pub trigger_nodes: Vec<usize>,
    pub feature_trigger: Option<FeatureTriggerInfo>,
}

/// Attack output: the poisoned graph plus its ground truth.
#[derive(Debug, Clone)]
pub struct PoisonedGraph {
    pub graph: Graph,
    pub truth: AttackGroundTruth,
}

/// Uniformly samples `num_targets` distinct labeled nodes whose label is not
/// `y_t`; returned ascending. Unlabeled nodes and nodes already in the
/// target class are never eligible.
pub fn select_targets(
    graph: &Graph,
    num_targets: usize,
    y_t: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if y_t >= graph.num_classes() {
        return Err(Error::InvalidConfig(format!(
            "target label {y_t} outside [0, {})",
            graph.num_classes()
        )));
    }
    let mut eligible: Vec<usize> = (0..graph.num_nodes())
        .filter(|&v| graph.is_labeled(v) && graph.label(v) != Some(y_t))
        .collect();
    if eligible.len() < num_targets {
        return Err(Error::InvalidInput(format!(
            "cannot select {num_targets} targets: only {} labeled nodes outside class {y_t}",
            eligible.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    eligible.shuffle(&mut rng);
    let mut targets = eligible[..num_targets].to_vec();
    targets.sort_unstable();
    Ok(targets)
}

// Feature sources shared by training-time injection and test-time
// attachment: the observed feature range for Random mode and the clean
// target-class row pool for InDistribution mode.
struct TriggerFeatureContext {
    lo: f64,
    hi: f64,
    pool: Vec<usize>,
}

fn trigger_feature_context(graph: &Graph, y_t: usize, anchors: &[usize]) -> TriggerFeatureContext {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in graph.features().data() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        lo = 0.0;
        hi = 0.0;
    }
    let mut pool: Vec<usize> = (0..graph.num_nodes())
        .filter(|&v| graph.label(v) == Some(y_t) && !anchors.contains(&v))
        .collect();
    if pool.is_empty() {
        pool = (0..graph.num_nodes())
            .filter(|&v| graph.label(v) == Some(y_t))
            .collect();
    }
    TriggerFeatureContext { lo, hi, pool }
}

fn trigger_row(
    ctx: &TriggerFeatureContext,
    graph: &Graph,
    anchor: usize,
    mode: TriggerFeatureMode,
    similar_noise_std: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let f = graph.feature_dim();
    Ok(match mode {
        TriggerFeatureMode::Random => (0..f)
            .map(|_| {
                if ctx.lo == ctx.hi {
                    ctx.lo
                } else {
                    rng.gen_range(ctx.lo..ctx.hi)
                }
            })
            .collect(),
        TriggerFeatureMode::TargetSimilar => graph
            .features()
            .row(anchor)
            .iter()
            .map(|&x| x + similar_noise_std * rng.sample::<f64, _>(StandardNormal))
            .collect(),
        TriggerFeatureMode::InDistribution => {
            if ctx.pool.is_empty() {
                return Err(Error::InvalidInput(
                    "no nodes of the target class to resample in-distribution trigger features from"
                        .into(),
                ));
            }
            let source = ctx.pool[rng.gen_range(0..ctx.pool.len())];
            graph.features().row(source).to_vec()
        }
    })
}

// Appends `trigger_size` nodes per anchor (clique wiring, one bridge to the
// anchor) and returns the extended graph pieces plus the new node ids.
fn append_trigger_blocks(
    graph: &Graph,
    anchors: &[usize],
    spec: &SubgraphAttackSpec,
    y_t: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<(usize, usize)>, DenseMatrix, Vec<usize>)> {
    let n = graph.num_nodes();
    let f = graph.feature_dim();
    let ts = spec.trigger_size;
    let total = n + anchors.len() * ts;
    let ctx = trigger_feature_context(graph, y_t, anchors);

    let mut features = DenseMatrix::zeros(total, f);
    for v in 0..n {
        features.row_mut(v).copy_from_slice(graph.features().row(v));
    }
    let mut edges: Vec<(usize, usize)> = graph.edges().to_vec();
    let mut trigger_nodes = Vec::with_capacity(anchors.len() * ts);
    for (k, &anchor) in anchors.iter().enumerate() {
        let base = n + k * ts;
        for i in 0..ts {
            let row = trigger_row(&ctx, graph, anchor, spec.feature_mode, spec.similar_noise_std, rng)?;
            features.row_mut(base + i).copy_from_slice(&row);
            trigger_nodes.push(base + i);
            for j in (i + 1)..ts {
                edges.push((base + i, base + j));
            }
        }
        edges.push((base, anchor));
    }
    Ok((edges, features, trigger_nodes))
}

/// Poisons a graph with subgraph triggers: appended clique triggers, one
/// bridge per target, targets relabeled to `y_t` and marked labeled. All
/// pre-existing rows and edges are untouched.
pub fn inject_subgraph_trigger(
    graph: &Graph,
    spec: &SubgraphAttackSpec,
    y_t: usize,
) -> Result<PoisonedGraph> {
    spec.validate()?;
    let targets = select_targets(graph, spec.num_targets, y_t, derive_seed(spec.seed, "targets"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "trigger-features"));
    let (edges, features, trigger_nodes) =
        append_trigger_blocks(graph, &targets, spec, y_t, &mut rng)?;

    let total = features.rows();
    let mut labels: Vec<Option<usize>> = graph.labels().to_vec();
    let mut mask: Vec<bool> = graph.labeled_mask().to_vec();
    labels.resize(total, None);
    mask.resize(total, false);
    for &t in &targets {
        labels[t] = Some(y_t);
        mask[t] = true;
    }

    let poisoned = Graph::build(total, &edges, features, labels, mask, graph.num_classes())?;
    Ok(PoisonedGraph {
        graph: poisoned,
        truth: AttackGroundTruth {
            attack_kind: spec.kind(),
            target_label: y_t,
            target_nodes: targets,
            trigger_nodes,
            feature_trigger: None,
        },
    })
}

/// Number of dimensions a feature trigger occupies for feature width `f`:
/// 2% of the width rounded up, but at least 5 (clamped to `f`).
pub fn feature_trigger_dim_count(f: usize) -> usize {
    ((0.02 * f as f64).ceil() as usize).max(5).min(f)
}

// Trigger dimensions: the dimensions where the target-class feature mean is
// farthest from the mean of all other known-label nodes. Ties break toward
// the lower dimension; the result is sorted ascending.
fn feature_trigger_dims(graph: &Graph, y_t: usize) -> Result<Vec<usize>> {
    let f = graph.feature_dim();
    let mut target_sum = vec![0.0; f];
    let mut other_sum = vec![0.0; f];
    let mut target_n = 0usize;
    let mut other_n = 0usize;
    for v in 0..graph.num_nodes() {
        match graph.label(v) {
            Some(c) if c == y_t => {
                for (s, &x) in target_sum.iter_mut().zip(graph.features().row(v)) {
                    *s += x;
                }
                target_n += 1;
            }
            Some(_) => {
                for (s, &x) in other_sum.iter_mut().zip(graph.features().row(v)) {
                    *s += x;
                }
                other_n += 1;
            }
            None => {}
        }
    }
    if target_n == 0 || other_n == 0 {
        return Err(Error::InvalidInput(format!(
            "feature trigger needs labeled nodes both inside and outside class {y_t}"
        )));
    }
    let mut gaps: Vec<(usize, f64)> = (0..f)
        .map(|d| {
            let gap = (target_sum[d] / target_n as f64 - other_sum[d] / other_n as f64).abs();
            (d, gap)
        })
        .collect();
    gaps.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut dims: Vec<usize> = gaps
        .iter()
        .take(feature_trigger_dim_count(f))
        .map(|&(d, _)| d)
        .collect();
    dims.sort_unstable();
    Ok(dims)
}

/// Poisons a graph by overwriting the trigger dimensions of each target's
/// feature row with the trigger value and relabeling the targets to `y_t`.
/// The adjacency is untouched and no nodes are added.
pub fn inject_feature_trigger(
    graph: &Graph,
    spec: &FeatureAttackSpec,
    y_t: usize,
) -> Result<PoisonedGraph> {
    spec.validate()?;
    let targets = select_targets(graph, spec.num_targets, y_t, derive_seed(spec.seed, "targets"))?;
    let dims = feature_trigger_dims(graph, y_t)?;
    let value = spec.trigger_value.unwrap_or_else(|| graph.features().max_abs());

    let mut features = graph.features().clone();
    for &t in &targets {
        for &d in &dims {
            features.set(t, d, value);
        }
    }
    let mut labels: Vec<Option<usize>> = graph.labels().to_vec();
    let mut mask: Vec<bool> = graph.labeled_mask().to_vec();
    for &t in &targets {
        labels[t] = Some(y_t);
        mask[t] = true;
    }
    let poisoned = Graph::build(
        graph.num_nodes(),
        graph.edges(),
        features,
        labels,
        mask,
        graph.num_classes(),
    )?;
    Ok(PoisonedGraph {
        graph: poisoned,
        truth: AttackGroundTruth {
            attack_kind: AttackKind::Feature,
            target_label: y_t,
            target_nodes: targets,
            trigger_nodes: Vec::new(),
            feature_trigger: Some(FeatureTriggerInfo { dims, value }),
        },
    })
}

/// Applies the training-time trigger mechanism to the poison-candidate
/// subset of an unseen graph: feature attacks reuse the recorded dims/value
/// exactly, subgraph attacks attach fresh trigger blocks with the same
/// wiring and feature mode. Nothing is relabeled; candidates keep their true
/// labels for evaluation.
pub fn attach_test_triggers(
    unseen: &Graph,
    truth: &AttackGroundTruth,
    spec: &AttackSpec,
    candidates: &[usize],
) -> Result<Graph> {
    if spec.kind() != truth.attack_kind {
        return Err(Error::InvalidInput(format!(
            "attack spec kind {} does not match recorded truth kind {}",
            spec.kind().as_str(),
            truth.attack_kind.as_str()
        )));
    }
    if candidates.is_empty() {
        return Err(Error::InvalidInput(
            "poison-candidate subset is empty".into(),
        ));
    }
    for &v in candidates {
        if v >= unseen.num_nodes() {
            return Err(Error::IndexOutOfRange {
                context: "poison candidate",
                index: v,
                len: unseen.num_nodes(),
            });
        }
    }
    match spec {
        AttackSpec::Feature(_) => {
            let info = truth.feature_trigger.as_ref().ok_or_else(|| {
                Error::InvalidInput("feature-attack truth carries no trigger pattern".into())
            })?;
            let mut features = unseen.features().clone();
            for &v in candidates {
                for &d in &info.dims {
                    if d >= unseen.feature_dim() {
                        return Err(Error::IndexOutOfRange {
                            context: "feature trigger dimension",
                            index: d,
                            len: unseen.feature_dim(),
                        });
                    }
                    features.set(v, d, info.value);
                }
            }
            Graph::build(
                unseen.num_nodes(),
                unseen.edges(),
                features,
                unseen.labels().to_vec(),
                unseen.labeled_mask().to_vec(),
                unseen.num_classes(),
            )
        }
        AttackSpec::Subgraph(sub) => {
            sub.validate()?;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(sub.seed, "test-triggers"));
            let (edges, features, _) =
                append_trigger_blocks(unseen, candidates, sub, truth.target_label, &mut rng)?;
            let total = features.rows();
            let mut labels: Vec<Option<usize>> = unseen.labels().to_vec();
            let mut mask: Vec<bool> = unseen.labeled_mask().to_vec();
            labels.resize(total, None);
            mask.resize(total, false);
            Graph::build(total, &edges, features, labels, mask, unseen.num_classes())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_synthetic, SyntheticSpec};

    fn base_graph() -> Graph {
        generate_synthetic(&SyntheticSpec {
            num_nodes: 60,
            num_classes: 3,
            feature_dim: 10,
            intra_class_edge_prob: 0.2,
            inter_class_edge_prob: 0.05,
            labeled_fraction: 0.6,
            seed: 7,
            ..SyntheticSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn select_targets_respects_eligibility() {
        let g = base_graph();
        let targets = select_targets(&g, 8, 0, 3).unwrap();
        assert_eq!(targets.len(), 8);
        for &t in &targets {
            assert!(g.is_labeled(t));
            assert_ne!(g.label(t), Some(0));
        }
        assert!(targets.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn select_targets_is_deterministic() {
        let g = base_graph();
        assert_eq!(
            select_targets(&g, 5, 1, 9).unwrap(),
            select_targets(&g, 5, 1, 9).unwrap()
        );
        assert_ne!(
            select_targets(&g, 5, 1, 9).unwrap(),
            select_targets(&g, 5, 1, 10).unwrap()
        );
    }

    #[test]
    fn select_targets_insufficient_pool_errors() {
        let g = base_graph();
        let err = select_targets(&g, 1000, 0, 0).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn subgraph_attack_adds_expected_structure() {
        let g = base_graph();
        let spec = SubgraphAttackSpec {
            num_targets: 1,
            trigger_size: 3,
            ..SubgraphAttackSpec::default()
        };
        let poisoned = inject_subgraph_trigger(&g, &spec, 0).unwrap();
        // One target: 3 new nodes, 3 clique edges plus 1 bridge.
        assert_eq!(poisoned.graph.num_nodes(), g.num_nodes() + 3);
        assert_eq!(poisoned.graph.num_edges(), g.num_edges() + 4);
        let target = poisoned.truth.target_nodes[0];
        assert_eq!(poisoned.graph.label(target), Some(0));
        assert!(poisoned.graph.is_labeled(target));
        // Bridge touches the first trigger node only.
        let block = &poisoned.truth.trigger_nodes;
        assert_eq!(block, &vec![60, 61, 62]);
        assert!(poisoned.graph.neighbors(60).contains(&target));
        assert!(!poisoned.graph.neighbors(61).contains(&target));
        assert_eq!(poisoned.graph.neighbors(61).to_vec(), vec![60, 62]);
    }

    #[test]
    fn subgraph_attack_trigger_size_one() {
        let g = base_graph();
        let spec = SubgraphAttackSpec {
            num_targets: 2,
            trigger_size: 1,
            ..SubgraphAttackSpec::default()
        };
        let poisoned = inject_subgraph_trigger(&g, &spec, 0).unwrap();
        assert_eq!(poisoned.graph.num_nodes(), g.num_nodes() + 2);
        assert_eq!(poisoned.graph.num_edges(), g.num_edges() + 2);
    }

    #[test]
    fn subgraph_attack_leaves_existing_graph_untouched() {
        let g = base_graph();
        let spec = SubgraphAttackSpec {
            num_targets: 4,
            ..SubgraphAttackSpec::default()
        };
        let poisoned = inject_subgraph_trigger(&g, &spec, 2).unwrap();
        for v in 0..g.num_nodes() {
            assert_eq!(poisoned.graph.features().row(v), g.features().row(v));
        }
        for e in g.edges() {
            assert!(poisoned.graph.edges().contains(e));
        }
        // Labels untouched except at targets.
        for v in 0..g.num_nodes() {
            if !poisoned.truth.target_nodes.contains(&v) {
                assert_eq!(poisoned.graph.label(v), g.label(v));
                assert_eq!(poisoned.graph.is_labeled(v), g.is_labeled(v));
            }
        }
    }

    #[test]
    fn similar_mode_with_zero_noise_copies_target_row() {
        let g = base_graph();
        let spec = SubgraphAttackSpec {
            num_targets: 2,
            feature_mode: TriggerFeatureMode::TargetSimilar,
            similar_noise_std: 0.0,
            ..SubgraphAttackSpec::default()
        };
        let poisoned = inject_subgraph_trigger(&g, &spec, 0).unwrap();
        for (k, &target) in poisoned.truth.target_nodes.iter().enumerate() {
            for i in 0..3 {
                let trig = poisoned.truth.trigger_nodes[k * 3 + i];
                assert_eq!(poisoned.graph.features().row(trig), g.features().row(target));
            }
        }
    }

    #[test]
    fn random_mode_stays_in_observed_range() {
        let g = base_graph();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in g.features().data() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let spec = SubgraphAttackSpec {
            num_targets: 3,
            feature_mode: TriggerFeatureMode::Random,
            ..SubgraphAttackSpec::default()
        };
        let poisoned = inject_subgraph_trigger(&g, &spec, 0).unwrap();
        for &t in &poisoned.truth.trigger_nodes {
            for &x in poisoned.graph.features().row(t) {
                assert!(x >= lo && x <= hi);
            }
        }
    }

    #[test]
    fn in_distribution_mode_copies_target_class_rows() {
        let g = base_graph();
        let spec = SubgraphAttackSpec {
            num_targets: 3,
            feature_mode: TriggerFeatureMode::InDistribution,
            ..SubgraphAttackSpec::default()
        };
        let poisoned = inject_subgraph_trigger(&g, &spec, 1).unwrap();
        let class_rows: Vec<&[f64]> = (0..g.num_nodes())
            .filter(|&v| g.label(v) == Some(1))
            .map(|v| g.features().row(v))
            .collect();
        for &t in &poisoned.truth.trigger_nodes {
            let row = poisoned.graph.features().row(t);
            assert!(class_rows.iter().any(|&r| r == row));
        }
    }

    #[test]
    fn feature_trigger_dim_rule() {
        assert_eq!(feature_trigger_dim_count(500), 10);
        assert_eq!(feature_trigger_dim_count(128), 5);
        assert_eq!(feature_trigger_dim_count(64), 5);
        assert_eq!(feature_trigger_dim_count(3), 3);
    }

    #[test]
    fn feature_attack_touches_only_target_rows() {
        let g = base_graph();
        let spec = FeatureAttackSpec {
            num_targets: 6,
            trigger_value: Some(9.5),
            seed: 1,
        };
        let poisoned = inject_feature_trigger(&g, &spec, 0).unwrap();
        assert_eq!(poisoned.graph.num_nodes(), g.num_nodes());
        assert_eq!(poisoned.graph.edges(), g.edges());
        let info = poisoned.truth.feature_trigger.as_ref().unwrap();
        assert_eq!(info.dims.len(), 5);
        assert_eq!(info.value, 9.5);
        for v in 0..g.num_nodes() {
            if poisoned.truth.target_nodes.contains(&v) {
                for &d in &info.dims {
                    assert_eq!(poisoned.graph.features().get(v, d), 9.5);
                }
                assert_eq!(poisoned.graph.label(v), Some(0));
            } else {
                assert_eq!(poisoned.graph.features().row(v), g.features().row(v));
            }
        }
        assert!(poisoned.truth.trigger_nodes.is_empty());
    }

    #[test]
    fn feature_attack_auto_value_is_max_abs() {
        let g = base_graph();
        let spec = FeatureAttackSpec {
            num_targets: 3,
            trigger_value: None,
            seed: 1,
        };
        let poisoned = inject_feature_trigger(&g, &spec, 0).unwrap();
        let info = poisoned.truth.feature_trigger.as_ref().unwrap();
        assert_eq!(info.value, g.features().max_abs());
    }

    #[test]
    fn feature_trigger_dims_pick_largest_class_gap() {
        // Class 0 differs from class 1 most strongly in dims 0..5 by
        // construction; dims 5..8 carry no gap.
        let n = 10;
        let features = DenseMatrix::from_fn(n, 8, |v, d| {
            if d < 5 && v % 2 == 0 {
                3.0
            } else {
                0.1
            }
        });
        let g = Graph::build(
            n,
            &[(0, 1)],
            features,
            (0..n).map(|v| Some(v % 2)).collect(),
            vec![true; n],
            2,
        )
        .unwrap();
        let poisoned = inject_feature_trigger(
            &g,
            &FeatureAttackSpec {
                num_targets: 2,
                trigger_value: Some(1.0),
                seed: 0,
            },
            0,
        )
        .unwrap();
        assert_eq!(
            poisoned.truth.feature_trigger.unwrap().dims,
            vec![0, 1, 2, 3, 4]
        );
    }

    #[test]
    fn attach_feature_triggers_reuses_recorded_pattern() {
        let g = base_graph();
        let spec = FeatureAttackSpec {
            num_targets: 4,
            trigger_value: None,
            seed: 2,
        };
        let poisoned = inject_feature_trigger(&g, &spec, 0).unwrap();
        let unseen = base_graph();
        let candidates = vec![1, 4, 7];
        let triggered = attach_test_triggers(
            &unseen,
            &poisoned.truth,
            &AttackSpec::Feature(spec),
            &candidates,
        )
        .unwrap();
        let info = poisoned.truth.feature_trigger.as_ref().unwrap();
        for &v in &candidates {
            for &d in &info.dims {
                assert_eq!(triggered.features().get(v, d), info.value);
            }
            // No relabeling at test time.
            assert_eq!(triggered.label(v), unseen.label(v));
            assert_eq!(triggered.is_labeled(v), unseen.is_labeled(v));
        }
        // Non-candidate rows untouched.
        assert_eq!(triggered.features().row(0), unseen.features().row(0));
    }

    #[test]
    fn attach_subgraph_triggers_extends_candidates() {
        let g = base_graph();
        let spec = SubgraphAttackSpec {
            num_targets: 2,
            ..SubgraphAttackSpec::default()
        };
        let poisoned = inject_subgraph_trigger(&g, &spec, 0).unwrap();
        let unseen = base_graph();
        let candidates = vec![3, 9];
        let triggered = attach_test_triggers(
            &unseen,
            &poisoned.truth,
            &AttackSpec::Subgraph(spec.clone()),
            &candidates,
        )
        .unwrap();
        assert_eq!(triggered.num_nodes(), unseen.num_nodes() + 2 * 3);
        assert_eq!(triggered.num_edges(), unseen.num_edges() + 2 * 4);
        // Each candidate gains exactly one bridge edge.
        for (k, &c) in candidates.iter().enumerate() {
            let block = unseen.num_nodes() + k * 3;
            assert!(triggered.neighbors(c).contains(&block));
            assert_eq!(triggered.degree(c), unseen.degree(c) + 1);
        }
        // Determinism: attaching twice gives the same graph.
        let again = attach_test_triggers(
            &unseen,
            &poisoned.truth,
            &AttackSpec::Subgraph(spec),
            &candidates,
        )
        .unwrap();
        assert_eq!(triggered, again);
    }

    #[test]
    fn attach_rejects_kind_mismatch() {
        let g = base_graph();
        let spec = SubgraphAttackSpec::default();
        let poisoned = inject_subgraph_trigger(&g, &spec, 0).unwrap();
        let err = attach_test_triggers(
            &g,
            &poisoned.truth,
            &AttackSpec::Feature(FeatureAttackSpec::default()),
            &[0],
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn attack_offsets_differ_per_seed() {
        let g = base_graph();
        let a = inject_subgraph_trigger(
            &g,
            &SubgraphAttackSpec { seed: 1, ..SubgraphAttackSpec::default() },
            0,
        )
        .unwrap();
        let b = inject_subgraph_trigger(
            &g,
            &SubgraphAttackSpec { seed: 2, ..SubgraphAttackSpec::default() },
            0,
        )
        .unwrap();
        assert_ne!(a.truth.target_nodes, b.truth.target_nodes);
    }
}
