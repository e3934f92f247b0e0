#!/usr/bin/env python3
"""Smoke test of the Python bindings.

Builds nothing itself: run ``cargo build -p cogbd-py`` first, then
``python3 python/smoke_test.py``. The script finds the compiled extension
under ``target/``, loads it, and walks the generate / attack / audit /
defend / evaluate path on a small graph, asserting the contracts that do
not depend on training quality.
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path

REPO_ROOT = Path(__file__).resolve().parent.parent


def load_extension():
    try:
        import cogbd_py  # already on the path, e.g. installed

        return cogbd_py
    except ImportError:
        pass
    candidates = [
        REPO_ROOT / "target" / profile / name
        for profile in ("debug", "release")
        for name in ("libcogbd_py.so", "libcogbd_py.dylib", "cogbd_py.dll")
    ]
    built = next((p for p in candidates if p.exists()), None)
    if built is None:
        sys.exit("extension not built; run `cargo build -p cogbd-py` first")
    stage = Path(tempfile.mkdtemp(prefix="cogbd-py-"))
    shutil.copy2(built, stage / "cogbd_py.so")
    sys.path.insert(0, str(stage))
    import cogbd_py

    return cogbd_py


cogbd = load_extension()

SMALL = {
    "seed": 0,
    "synth.num_nodes": 150,
    "synth.num_classes": 3,
    "synth.feature_dim": 8,
    "synth.intra_class_edge_prob": 0.25,
    "synth.inter_class_edge_prob": 0.02,
    "synth.labeled_fraction": 0.6,
    "attack.num_targets": 4,
    "crm.hidden_dim": 6,
    "crm.epochs": 30,
    "robust.hidden_dim": 8,
    "robust.epochs": 30,
}


def settings(**overrides):
    merged = dict(SMALL)
    merged.update(overrides)
    return merged


def check(condition, message):
    if not condition:
        sys.exit(f"FAIL: {message}")
    print(f"ok: {message}")


# Generation is deterministic in the settings.
graph = cogbd.generate(settings())
again = cogbd.generate(settings())
check(graph.num_nodes == 150 and graph.num_classes == 3, "generate honors the settings")
check(graph.edges() == again.edges() and graph.features() == again.features(),
      "generation is deterministic")
check(cogbd.generate(settings(seed=1)).edges() != graph.edges(),
      "the seed actually moves the sample")

# Rejected settings surface as ValueError.
try:
    cogbd.generate({"synth.num_nodes": "many"})
except ValueError:
    print("ok: malformed settings raise ValueError")
else:
    sys.exit("FAIL: malformed settings were accepted")

# Inductive split partitions the nodes.
train, unseen, candidates = cogbd.split(graph, settings())
check(train.num_nodes + unseen.num_nodes == graph.num_nodes, "split partitions the nodes")
check(candidates and all(v < unseen.num_nodes for v in candidates),
      "poison candidates index the unseen graph")

# Subgraph attack appends trigger cliques and relabels the targets.
poisoned, truth = cogbd.attack(train, settings())
check(len(truth["target_nodes"]) == 4 and len(truth["trigger_nodes"]) == 12,
      "subgraph attack plants 4 triggers of size 3")
check(poisoned.num_nodes == train.num_nodes + 12, "trigger nodes are appended")
labels = poisoned.labels()
check(all(labels[v] == truth["target_label"] for v in truth["target_nodes"]),
      "targets carry the attack label")

# Feature attack keeps the topology.
f_poisoned, f_truth = cogbd.attack(train, settings(**{"attack.family": "feature"}))
check(f_poisoned.num_nodes == train.num_nodes and f_poisoned.edges() == train.edges(),
      "feature attack preserves topology")

# Homophily audit: poisoned feature-attack targets sit below the clean
# mean. Narrow feature spaces dilute that signal (the trigger overwrites
# most of the row), so this part runs at a realistic width.
wide = cogbd.generate(settings(**{"synth.num_nodes": 300,
                                  "synth.feature_dim": 64,
                                  "synth.feature_noise_std": 0.2}))
f_poisoned, f_truth = cogbd.attack(wide, settings(**{"attack.family": "feature",
                                                     "attack.num_targets": 8}))
special = set(f_truth["target_nodes"])
groups = {
    "clean": [v for v in range(f_poisoned.num_nodes) if v not in special],
    "target": f_truth["target_nodes"],
}
clean_stats, target_stats = cogbd.audit(f_poisoned, groups)
check(clean_stats["count"] + target_stats["count"] == f_poisoned.num_nodes,
      "audit covers every node exactly once")
check(target_stats["mean"] < clean_stats["mean"],
      f"poisoned targets lose homophily "
      f"({target_stats['mean']:.3f} < {clean_stats['mean']:.3f})")
h0 = f_poisoned.feature_homophily(0)
check(-1.0 <= h0 <= 1.0, "per-node homophily lies in [-1, 1]")

# Defense: truth-free by construction, exact suspect budget, deterministic.
try:
    cogbd.defend(poisoned, settings(), truth=truth)
except TypeError:
    print("ok: defend refuses a truth argument")
else:
    sys.exit("FAIL: defend accepted ground truth")
outcome = cogbd.defend(poisoned, settings())
n = poisoned.num_nodes
check(len(outcome["errors"]) == n and len(outcome["scores"]) == n,
      "defense scores every node")
check(len(outcome["suspects"]) == math.ceil(0.03 * n), "suspect budget is ceil(rho * N)")
check(sorted(outcome["suspect_targets"] + outcome["suspect_triggers"])
      == outcome["suspects"], "suspect partition is exact")
check(cogbd.defend(poisoned, settings())["suspects"] == outcome["suspects"],
      "defense is deterministic")
pruned = outcome["pruned_graph"]
flagged = set(outcome["suspect_triggers"])
check(all(u not in flagged and v not in flagged for u, v in pruned.edges()),
      "pruning removed every suspect-incident edge")

# The trained classifier predicts and survives a checkpoint round-trip.
clf = outcome["classifier"]
preds = clf.predict(unseen)
check(len(preds) == unseen.num_nodes, "classifier predicts every unseen node")
acc = cogbd.accuracy(preds, unseen)
check(0.0 <= acc <= 1.0, f"unseen accuracy {acc:.3f} is a fraction")
asr = cogbd.attack_success_rate(preds, unseen, candidates, truth["target_label"])
check(0.0 <= asr <= 1.0, f"attack success {asr:.3f} is a fraction")
probs = clf.predict_probs(unseen)
check(all(abs(sum(row) - 1.0) < 1e-9 for row in probs), "probability rows sum to 1")
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "clf.json"
    clf.save(path)
    check(cogbd.Classifier.load(path).predict(unseen) == preds,
          "checkpoint round-trip preserves predictions")
    gpath = Path(tmp) / "graph.json"
    graph.save(gpath)
    check(cogbd.Graph.load(gpath).features() == graph.features(),
          "graph file round-trip preserves features")

# One-repetition experiment returns the full metric table.
table = cogbd.experiment(settings(runs=1))
conditions = [row["condition"] for row in table["rows"]]
check(conditions == ["clean_ref", "undefended", "prune", "cogbd"],
      "experiment covers all four conditions")
check(len(table["means"]) == 4, "one mean row per condition")
defended = table["rows"][conditions.index("cogbd")]
check(defended["recall_targets"] is not None, "defended row reports detection recall")

# Numerical self-checks all pass.
checks = cogbd.verify()
failed = [c["name"] for c in checks if not c["passed"]]
check(not failed, f"all {len(checks)} numerical self-checks pass")

print(f"\nsmoke test passed ({cogbd.__name__} from {cogbd.__file__})")
