//! Command-line front end of the workbench.
//!
//! Every subcommand that trains or samples takes the same configuration
//! surface: an optional `--config` file of `key = value` lines plus any
//! number of `--set key=value` overrides, applied in that order on top of
//! the defaults. Whatever a command actually used is written back as a
//! canonical resolved config next to its outputs. Commands that defend are
//! deliberately blind to attack ground truth; truth sidecars only ever
//! reach `audit` and the experiment harness, which need them for scoring.

use clap::{Args, Parser, Subcommand};
use cogbd::attack::AttackGroundTruth;
use cogbd::config::derive_seed;
use cogbd::defense::{defend, DefenseConfig};
use cogbd::detect::{write_report_json, write_scores_csv};
use cogbd::error::{Error, Result};
use cogbd::eval::{accuracy, attack_success_rate, run_experiment, Condition};
use cogbd::graph::{split_inductive, Graph};
use cogbd::homophily::{homophily_audit, write_audit_csv, write_audit_json};
use cogbd::io::{import_csv, load_graph, load_truth, save_graph, save_split, save_truth};
use cogbd::nn::Checkpoint;
use cogbd::robust::{write_trace_csv, GcnClassifier};
use cogbd::synth::generate_synthetic;
use cogbd::WorkbenchConfig;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "cogbd",
    version,
    about = "Graph backdoor attack and defense workbench"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic attributed graph, or import one from CSV.
    Gen(GenArgs),
    /// Poison a training graph with the configured backdoor attack.
    Attack(AttackArgs),
    /// Report feature-based homophily, optionally grouped by ground truth.
    Audit(AuditArgs),
    /// Run the two-stage defense on a (presumed poisoned) graph.
    Defend(DefendArgs),
    /// Evaluate a classifier checkpoint on a graph.
    Eval(EvalArgs),
    /// Run the full multi-seed experiment over all conditions.
    Run(RunArgs),
    /// Run the built-in numerical self-checks.
    Verify,
}

#[derive(Args)]
struct ConfigArgs {
    /// Configuration file of `key = value` lines (`#` comments).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one configuration key; repeatable, applied after --config.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<WorkbenchConfig> {
        let mut config = match &self.config {
            Some(path) => WorkbenchConfig::load(path)?,
            None => WorkbenchConfig::default(),
        };
        for kv in &self.set {
            let (key, value) = kv.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("--set expects KEY=VALUE, got '{kv}'"))
            })?;
            config.apply_kv(key.trim(), value)?;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Where the graph JSON goes.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Also split into train/unseen graphs and write them here.
    #[arg(long, value_name = "DIR")]
    split_dir: Option<PathBuf>,
    /// Import edges from CSV (two integer columns) instead of generating.
    #[arg(long, value_name = "FILE", requires = "features_csv")]
    edges_csv: Option<PathBuf>,
    /// Import features from CSV (one row per node) instead of generating.
    #[arg(long, value_name = "FILE", requires = "edges_csv")]
    features_csv: Option<PathBuf>,
    /// Class count of an imported graph; imported nodes carry no labels.
    #[arg(long, default_value_t = 0)]
    num_classes: usize,
}

#[derive(Args)]
struct AttackArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Clean training graph.
    #[arg(long, value_name = "FILE")]
    graph: PathBuf,
    /// Where the poisoned graph goes.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Where the ground-truth sidecar goes (evaluation only; never feed it
    /// to the defense).
    #[arg(long, value_name = "FILE")]
    truth_out: PathBuf,
}

#[derive(Args)]
struct AuditArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, value_name = "FILE")]
    graph: PathBuf,
    /// Ground-truth sidecar; with it the audit groups nodes into clean,
    /// target, and trigger sets, otherwise it reports one group of all
    /// nodes.
    #[arg(long, value_name = "FILE")]
    truth: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    out_csv: PathBuf,
    #[arg(long, value_name = "FILE")]
    out_json: Option<PathBuf>,
}

#[derive(Args)]
struct DefendArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Training graph as the defense sees it; no truth enters here.
    #[arg(long, value_name = "FILE")]
    graph: PathBuf,
    /// Output directory for report, pruned graph, and checkpoints.
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Classifier checkpoint produced by `defend` or `run`.
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    #[arg(long, value_name = "FILE")]
    graph: PathBuf,
    /// Candidate node ids (one per line) for the attack-success metric.
    #[arg(long, value_name = "FILE", requires = "target_label")]
    candidates_file: Option<PathBuf>,
    /// Target class of the attack-success metric.
    #[arg(long, requires = "candidates_file")]
    target_label: Option<usize>,
    /// Optional metrics JSON.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Output directory: resolved config, metrics, per-run artifacts.
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
    /// Skip per-run artifact files; write metrics and resolved config only.
    #[arg(long)]
    metrics_only: bool,
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let config = args.config.resolve()?;
    let graph = match (&args.edges_csv, &args.features_csv) {
        (Some(edges), Some(features)) => import_csv(edges, features, args.num_classes)?,
        _ => {
            let mut spec = config.synth.clone();
            spec.seed = derive_seed(config.seed, "synth");
            generate_synthetic(&spec)?
        }
    };
    save_graph(&graph, &args.out)?;
    println!(
        "wrote graph with {} nodes, {} edges to {}",
        graph.num_nodes(),
        graph.num_edges(),
        args.out.display()
    );
    if let Some(dir) = &args.split_dir {
        create_dir(dir)?;
        let split = split_inductive(&graph, config.train_fraction, derive_seed(config.seed, "split"))?;
        save_graph(&split.train_graph, &dir.join("train.graph.json"))?;
        save_graph(&split.unseen_graph, &dir.join("unseen.graph.json"))?;
        save_split(&split, &dir.join("split.json"))?;
        config.write_resolved(&dir.join("resolved.conf"))?;
        println!(
            "split into {} train / {} unseen nodes under {}",
            split.train_graph.num_nodes(),
            split.unseen_graph.num_nodes(),
            dir.display()
        );
    }
    Ok(())
}

fn cmd_attack(args: AttackArgs) -> Result<()> {
    let config = args.config.resolve()?;
    let graph = load_graph(&args.graph)?;
    let spec = config.attack.with_seed(derive_seed(config.seed, "attack"));
    let poisoned = spec.apply(&graph, config.target_label)?;
    save_graph(&poisoned.graph, &args.out)?;
    save_truth(&poisoned.truth, &args.truth_out)?;
    println!(
        "{} attack: {} targets relabeled to class {}, {} trigger nodes added",
        poisoned.truth.attack_kind.as_str(),
        poisoned.truth.target_nodes.len(),
        poisoned.truth.target_label,
        poisoned.truth.trigger_nodes.len()
    );
    println!("poisoned graph: {}", args.out.display());
    println!("ground truth:   {}", args.truth_out.display());
    Ok(())
}

fn truth_groups(graph: &Graph, truth: &AttackGroundTruth) -> Vec<(String, Vec<usize>)> {
    let mut special = vec![false; graph.num_nodes()];
    for &v in truth.target_nodes.iter().chain(truth.trigger_nodes.iter()) {
        if v < graph.num_nodes() {
            special[v] = true;
        }
    }
    let clean: Vec<usize> = (0..graph.num_nodes()).filter(|&v| !special[v]).collect();
    vec![
        ("clean".to_string(), clean),
        ("target".to_string(), truth.target_nodes.clone()),
        ("trigger".to_string(), truth.trigger_nodes.clone()),
    ]
}

fn cmd_audit(args: AuditArgs) -> Result<()> {
    let config = args.config.resolve()?;
    let graph = load_graph(&args.graph)?;
    let groups = match &args.truth {
        Some(path) => truth_groups(&graph, &load_truth(path)?),
        None => vec![("all".to_string(), (0..graph.num_nodes()).collect())],
    };
    let audit = homophily_audit(&graph, &groups, &config.homophily)?;
    write_audit_csv(&audit, &args.out_csv)?;
    if let Some(path) = &args.out_json {
        write_audit_json(&audit, path)?;
    }
    for group in &audit.groups {
        match group.mean {
            Some(mean) => println!("{:<8} n={:<5} mean homophily {mean:.4}", group.name, group.count),
            None => println!("{:<8} n=0", group.name),
        }
    }
    Ok(())
}

fn cmd_defend(args: DefendArgs) -> Result<()> {
    let config = args.config.resolve()?;
    let graph = load_graph(&args.graph)?;
    create_dir(&args.out_dir)?;
    let mut defense = DefenseConfig {
        crm: config.crm.clone(),
        detect: config.detect.clone(),
        robust: config.robust.clone(),
    };
    defense.crm.seed = derive_seed(config.seed, "crm");
    defense.robust.seed = derive_seed(config.seed, "robust");
    let outcome = defend(&graph, &defense)?;

    let dir = &args.out_dir;
    write_report_json(&outcome.report, &dir.join("report.json"))?;
    write_scores_csv(&outcome.report, &dir.join("scores.csv"))?;
    save_graph(&outcome.pruned_graph, &dir.join("pruned.graph.json"))?;
    outcome.crm.model.to_checkpoint().save(&dir.join("crm.ckpt.json"))?;
    outcome
        .classifier
        .model
        .to_checkpoint()
        .save(&dir.join("classifier.json"))?;
    write_trace_csv(&outcome.classifier.trace, &dir.join("trace.csv"))?;
    config.write_resolved(&dir.join("resolved.conf"))?;

    let pruned_edges = graph.num_edges() - outcome.pruned_graph.num_edges();
    println!(
        "flagged {} suspects ({} unlabeled, {} labeled), pruned {} edges",
        outcome.report.suspects.len(),
        outcome.report.suspect_triggers.len(),
        outcome.report.suspect_targets.len(),
        pruned_edges
    );
    println!("outputs under {}", dir.display());
    Ok(())
}

fn read_candidates(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut ids = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let id = line.parse().map_err(|_| {
            Error::parse(path, format!("line {}: expected a node id, got '{line}'", idx + 1))
        })?;
        ids.push(id);
    }
    Ok(ids)
}

#[derive(serde::Serialize)]
struct EvalOutput {
    accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    asr: Option<f64>,
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let model = GcnClassifier::from_checkpoint(&Checkpoint::load(&args.model)?)?;
    let graph = load_graph(&args.graph)?;
    let preds = model.predict(&graph)?;
    let nodes: Vec<usize> = (0..graph.num_nodes()).collect();
    let acc = accuracy(&preds, graph.labels(), &nodes)?;
    println!("accuracy {acc:.4} over {} labeled nodes", graph.labeled_mask().iter().filter(|&&m| m).count());

    let asr = match (&args.candidates_file, args.target_label) {
        (Some(path), Some(target)) => {
            let candidates = read_candidates(path)?;
            let asr = attack_success_rate(&preds, graph.labels(), &candidates, target)?;
            println!("attack success {asr:.4} over {} candidates", candidates.len());
            Some(asr)
        }
        _ => None,
    };
    if let Some(out) = &args.out {
        cogbd::io::write_json(&EvalOutput { accuracy: acc, asr }, out)?;
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let config = args.config.resolve()?;
    create_dir(&args.out_dir)?;
    config.write_resolved(&args.out_dir.join("resolved.conf"))?;
    let artifacts = if args.metrics_only { None } else { Some(args.out_dir.as_path()) };
    let result = run_experiment(&config, artifacts)?;
    if args.metrics_only {
        cogbd::eval::write_metrics_csv(&result, &args.out_dir.join("metrics.csv"))?;
        cogbd::eval::write_metrics_json(&result, &args.out_dir.join("metrics.json"))?;
    }
    println!("{:<12} {:>9} {:>9}", "condition", "accuracy", "asr");
    for condition in Condition::ALL {
        if let Some(row) = result.mean(condition) {
            println!(
                "{:<12} {:>9.4} {:>9.4}",
                condition.as_str(),
                row.accuracy,
                row.asr
            );
        }
    }
    println!("metrics under {}", args.out_dir.display());
    Ok(())
}

fn cmd_verify() -> Result<()> {
    let results = cogbd::verify::run_all();
    let mut failed = 0usize;
    for check in &results {
        let status = if check.passed { "ok  " } else { "FAIL" };
        println!("{status} {:<28} {}", check.name, check.detail);
        if !check.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        return Err(Error::Numeric(format!(
            "{failed} of {} self-checks failed",
            results.len()
        )));
    }
    println!("all {} self-checks passed", results.len());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Attack(args) => cmd_attack(args),
        Command::Audit(args) => cmd_audit(args),
        Command::Defend(args) => cmd_defend(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Run(args) => cmd_run(args),
        Command::Verify => cmd_verify(),
    }
}

fn main() {
    if let Err(err) = run(Cli::parse()) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
