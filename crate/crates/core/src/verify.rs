//! Built-in self-checks.
//!
//! Fast, deterministic sanity checks over the numerical core: analytic
//! gradients against central differences, the exact two-term decomposition
//! of propagation shifts, the closed-form properties of suspicion scores
//! and objective weights, and end-to-end determinism. The whole suite runs
//! in seconds and backs the `verify` subcommand.

use crate::config::derive_seed;
use crate::crm::{train_crm, CrmConfig, CrmModel};
use crate::defense::{defend, DefenseConfig};
use crate::detect::{suspicion_scores, ScoreOrientation};
use crate::gradcheck::{finite_difference_gradient, max_relative_error};
use crate::graph::{Aggregation, Graph};
use crate::homophily::{propagation_shift, PerturbationQuery};
use crate::linalg::DenseMatrix;
use crate::nn::{gcn_backward, gcn_forward};
use crate::robust::{node_weights, robust_loss, GcnClassifier, RobustConfig, UnlearnCap};
use crate::synth::{generate_synthetic, SyntheticSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, passed: bool, detail: String) -> CheckResult {
        CheckResult { name, passed, detail }
    }
}

fn check_graph(seed: u64) -> Graph {
    generate_synthetic(&SyntheticSpec {
        num_nodes: 12,
        num_classes: 3,
        feature_dim: 5,
        intra_class_edge_prob: 0.5,
        inter_class_edge_prob: 0.15,
        labeled_fraction: 0.6,
        seed,
        ..SyntheticSpec::default()
    })
    .expect("static check spec is valid")
}

const GRAD_TOL: f64 = 1e-6;

/// Central differences straddle relu kinks, so a probe point with a
/// pre-activation inside the step width compares a one-sided slope
/// against the subgradient and reports a bogus mismatch. Fixtures must
/// keep every pre-activation at least this far from zero.
const KINK_MARGIN: f64 = 1e-3;

fn crm_gradient_check() -> CheckResult {
    let g = check_graph(1);
    let config = CrmConfig {
        hidden_dim: 4,
        alpha: 0.8,
        beta: 0.5,
        ..CrmConfig::default()
    };
    let mut worst: f64 = 0.0;
    let mut margin = f64::INFINITY;
    for aggregation in [Aggregation::Sum, Aggregation::Mean] {
        // Init seed chosen so both aggregations clear KINK_MARGIN; zero
        // biases make dead neighborhoods land exactly on the kink.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = CrmModel::init(
            g.feature_dim(),
            &CrmConfig { aggregation, ..config.clone() },
            &mut rng,
        );
        let adj = g.normalized_adjacency();
        let x = g.features();
        let m = g.aggregate(x, aggregation);
        let tape = model.forward(&adj, x);
        for z in [tape.gcn.z1.data(), tape.node.z1.data(), tape.neigh.z1.data()] {
            for &v in z {
                margin = margin.min(v.abs());
            }
        }
        let grads = model.backward(&adj, x, &m, &tape);
        let mut analytic = Vec::new();
        for l in [
            &grads.enc1,
            &grads.enc2,
            &grads.dec_node1,
            &grads.dec_node2,
            &grads.dec_neigh1,
            &grads.dec_neigh2,
        ] {
            l.push_flat(&mut analytic);
        }
        let numeric = finite_difference_gradient(
            |p| {
                let mut probe = model.clone();
                probe.read_flat(p);
                let t = probe.forward(&adj, x);
                probe.loss(x, &m, &t)
            },
            &model.to_flat(),
            1e-5,
        );
        worst = worst.max(max_relative_error(&analytic, &numeric));
    }
    CheckResult::new(
        "reconstruction-gradient",
        worst < GRAD_TOL && margin > KINK_MARGIN,
        format!(
            "max relative error {worst:.3e} (tolerance {GRAD_TOL:.1e}), kink margin {margin:.1e}"
        ),
    )
}

fn robust_gradient_check() -> CheckResult {
    let g = check_graph(2);
    let labeled = g.labeled_nodes();
    let (v_s, v_l): (Vec<usize>, Vec<usize>) = labeled.iter().partition(|&&v| v % 3 == 0);
    let scores: Vec<f64> = (0..g.num_nodes()).map(|v| (v % 5) as f64 / 8.0).collect();
    let (w_l, w_s) = node_weights(&scores, 2.0, 2.0);
    let adj = g.normalized_adjacency();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = GcnClassifier::init(g.feature_dim(), 4, g.num_classes(), &mut rng);

    let tape = gcn_forward(&adj, g.features(), &model.l1, &model.l2);
    let margin = tape
        .z1
        .data()
        .iter()
        .fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
    let (_, dlogits) = robust_loss(
        &tape.h,
        g.labels(),
        &v_l,
        &v_s,
        &w_l,
        &w_s,
        0.3,
        UnlearnCap::Off,
    )
    .expect("static check objective is well formed");
    let (g1, g2) = gcn_backward(&adj, g.features(), &model.l2, &tape, &dlogits);
    let mut analytic = Vec::new();
    g1.push_flat(&mut analytic);
    g2.push_flat(&mut analytic);

    let numeric = finite_difference_gradient(
        |p| {
            let mut probe = model.clone();
            probe.read_flat(p);
            let t = gcn_forward(&adj, g.features(), &probe.l1, &probe.l2);
            robust_loss(&t.h, g.labels(), &v_l, &v_s, &w_l, &w_s, 0.3, UnlearnCap::Off)
                .expect("static check objective is well formed")
                .0
                .total
        },
        &model.to_flat(),
        1e-5,
    );
    let err = max_relative_error(&analytic, &numeric);
    CheckResult::new(
        "objective-gradient",
        err < GRAD_TOL && margin > KINK_MARGIN,
        format!(
            "max relative error {err:.3e} (tolerance {GRAD_TOL:.1e}), kink margin {margin:.1e}"
        ),
    )
}

const SHIFT_TOL: f64 = 1e-10;

fn shift_identity_check() -> CheckResult {
    let mut worst: f64 = 0.0;
    let mut cases = 0usize;
    for seed in 0..10u64 {
        let g = check_graph(100 + seed);
        let base_adj = g.normalized_adjacency();
        // Perturbation: toggle one edge, renormalize, and nudge features.
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "shift"));
        let u = rng.gen_range(0..g.num_nodes());
        let mut w = rng.gen_range(0..g.num_nodes());
        if w == u {
            w = (w + 1) % g.num_nodes();
        }
        let mut edges = g.edges().to_vec();
        let key = (u.min(w), u.max(w));
        match edges.iter().position(|&e| e == key) {
            Some(pos) => {
                edges.remove(pos);
            }
            None => edges.push(key),
        }
        let perturbed = Graph::build(
            g.num_nodes(),
            &edges,
            g.features().clone(),
            g.labels().to_vec(),
            g.labeled_mask().to_vec(),
            g.num_classes(),
        )
        .expect("edge toggle keeps the graph valid");
        let perturbed_adj = perturbed.normalized_adjacency();
        let delta = DenseMatrix::from_fn(g.num_nodes(), g.feature_dim(), |_, _| {
            rng.gen_range(-0.5..0.5)
        });
        for depth in 1..=3 {
            let node = rng.gen_range(0..g.num_nodes());
            let shift = propagation_shift(&PerturbationQuery {
                base_adj: &base_adj,
                perturbed_adj: &perturbed_adj,
                features: g.features(),
                delta_features: &delta,
                depth,
                node,
            })
            .expect("query dimensions are consistent");
            for d in 0..g.feature_dim() {
                let residual =
                    (shift.direct[d] - shift.structural[d] - shift.feature[d]).abs();
                worst = worst.max(residual);
            }
            cases += 1;
        }
    }
    CheckResult::new(
        "propagation-shift-identity",
        worst < SHIFT_TOL,
        format!("{cases} cases, max residual {worst:.3e} (tolerance {SHIFT_TOL:.1e})"),
    )
}

fn score_analytics_check() -> CheckResult {
    let mut failures = Vec::new();
    // errors [0, 2]: mean 1, population std 1.
    let scores = suspicion_scores(&[0.0, 1.0, 2.0], 0.5, ScoreOrientation::Increasing)
        .expect("valid score inputs");
    if scores[1] != 0.5 {
        failures.push(format!("score at the mean is {}, want 0.5", scores[1]));
    }
    let scores =
        suspicion_scores(&[0.0, 2.0], 1.0, ScoreOrientation::Increasing).expect("valid inputs");
    let sig1 = 1.0 / (1.0 + (-1.0f64).exp());
    if (scores[1] - sig1).abs() > 1e-15 {
        failures.push(format!(
            "score one deviation above the mean is {}, want sigmoid(1) = {sig1}",
            scores[1]
        ));
    }
    let degenerate =
        suspicion_scores(&[4.0; 6], 0.5, ScoreOrientation::Increasing).expect("valid inputs");
    if degenerate.iter().any(|&s| s != 0.5) {
        failures.push("degenerate error spread does not score 0.5 everywhere".into());
    }
    let (w_l, w_s) = node_weights(&[0.0, 1.0], 2.0, 2.0);
    if w_l != vec![1.0, 0.0] || w_s != vec![0.0, 1.0] {
        failures.push("weight endpoints are off".into());
    }
    let passed = failures.is_empty();
    CheckResult::new(
        "score-analytics",
        passed,
        if passed {
            "closed-form score and weight values hold".into()
        } else {
            failures.join("; ")
        },
    )
}

fn error_decomposition_check() -> CheckResult {
    let g = check_graph(5);
    let trained = train_crm(
        &g,
        &CrmConfig {
            hidden_dim: 4,
            epochs: 10,
            ..CrmConfig::default()
        },
    )
    .expect("tiny training run succeeds");
    let adj = g.normalized_adjacency();
    let m = g.aggregate(g.features(), trained.model.aggregation);
    let tape = trained.model.forward(&adj, g.features());
    let errors = trained.model.per_node_errors(g.features(), &m, &tape);
    let loss = trained.model.loss(g.features(), &m, &tape);
    let diff = (errors.iter().sum::<f64>() - loss).abs();
    CheckResult::new(
        "error-decomposition",
        diff == 0.0,
        format!("per-node errors sum to the loss, absolute difference {diff:.3e}"),
    )
}

fn determinism_check() -> CheckResult {
    let g = check_graph(6);
    let config = DefenseConfig {
        crm: CrmConfig {
            hidden_dim: 4,
            epochs: 8,
            ..CrmConfig::default()
        },
        robust: RobustConfig {
            hidden_dim: 4,
            epochs: 8,
            ..RobustConfig::default()
        },
        ..DefenseConfig::default()
    };
    let a = defend(&g, &config).expect("tiny defense run succeeds");
    let b = defend(&g, &config).expect("tiny defense run succeeds");
    let same = a.report == b.report && a.classifier.model == b.classifier.model;
    CheckResult::new(
        "determinism",
        same,
        if same {
            "two identical defense runs produced identical outputs".into()
        } else {
            "repeated defense runs diverged".into()
        },
    )
}

/// Runs every check; all are deterministic and the suite finishes in
/// seconds.
pub fn run_all() -> Vec<CheckResult> {
    vec![
        crm_gradient_check(),
        robust_gradient_check(),
        shift_identity_check(),
        score_analytics_check(),
        error_decomposition_check(),
        determinism_check(),
    ]
}
