//! Workbench configuration.
//!
//! One flat `key = value` format covers the file on disk and `--set`
//! overrides; keys are dotted paths into the nested settings. Unknown keys
//! are rejected rather than ignored so typos cannot silently fall back to
//! defaults. The resolved configuration can be dumped in canonical sorted
//! form and hashed, which is what makes "same config, same bytes" claims
//! checkable.
//!
//! Seeding rule: everything derives from the single top-level `seed`. Run
//! `r` uses `derive_seed(seed, "run-{r}")` as its base, and each stage
//! derives its own stream from that base with a fixed tag: `synth`,
//! `split`, `attack`, `crm`, `robust`. Attacks further fan out internally
//! (target choice, trigger features, test-time triggers), so no two stages
//! ever share a random stream.

use crate::attack::{AttackSpec, FeatureAttackSpec, SubgraphAttackSpec, TriggerFeatureMode};
use crate::crm::CrmConfig;
use crate::detect::{DetectConfig, ScoreOrientation};
use crate::error::{Error, Result};
use crate::graph::Aggregation;
use crate::homophily::{HomophilyConfig, Similarity};
use crate::robust::{RobustConfig, UnlearnCap};
use crate::synth::SyntheticSpec;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::Path;

/// Splits one seed into independent streams, keyed by a tag. FNV-1a over
/// the base seed's little-endian bytes followed by the tag bytes.
pub fn derive_seed(base: u64, tag: &str) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in base.to_le_bytes().into_iter().chain(tag.bytes()) {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Base seed of repetition `run` under top-level seed `seed`.
pub fn run_seed(seed: u64, run: usize) -> u64 {
    derive_seed(seed, &format!("run-{run}"))
}

/// Every knob of a full experiment. Stage seeds inside the nested configs
/// are placeholders; the runner overwrites them per run from `seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkbenchConfig {
    pub seed: u64,
    /// Number of repetitions, each with derived seeds.
    pub runs: usize,
    /// Class the attack forces.
    pub target_label: usize,
    /// Fraction of nodes kept for training; the rest becomes the unseen
    /// evaluation graph.
    pub train_fraction: f64,
    /// Cosine threshold of the edge-pruning baseline defense.
    pub prune_similarity_threshold: f64,
    pub synth: SyntheticSpec,
    pub attack: AttackSpec,
    pub crm: CrmConfig,
    pub detect: DetectConfig,
    pub robust: RobustConfig,
    pub homophily: HomophilyConfig,
}

impl Default for WorkbenchConfig {
    fn default() -> Self {
        WorkbenchConfig {
            seed: 0,
            runs: 5,
            target_label: 0,
            train_fraction: 0.8,
            prune_similarity_threshold: 0.1,
            synth: SyntheticSpec::default(),
            attack: AttackSpec::Subgraph(SubgraphAttackSpec::default()),
            crm: CrmConfig::default(),
            detect: DetectConfig::default(),
            robust: RobustConfig::default(),
            homophily: HomophilyConfig::default(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str, what: &str) -> Result<T> {
    value.trim().parse().map_err(|_| {
        Error::InvalidConfig(format!("key '{key}' expects {what}, got '{value}'"))
    })
}

impl WorkbenchConfig {
    /// Applies one `key = value` assignment. `attack.family` switches the
    /// attack family (resetting family-specific keys to that family's
    /// defaults), so it must come before other `attack.*` keys.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "seed" => self.seed = parse_num(key, value, "an unsigned integer")?,
            "runs" => self.runs = parse_num(key, value, "an unsigned integer")?,
            "target_label" => self.target_label = parse_num(key, value, "an unsigned integer")?,
            "train_fraction" => self.train_fraction = parse_num(key, value, "a number")?,
            "prune_similarity_threshold" => {
                self.prune_similarity_threshold = parse_num(key, value, "a number")?
            }

            "synth.num_nodes" => self.synth.num_nodes = parse_num(key, value, "an unsigned integer")?,
            "synth.num_classes" => {
                self.synth.num_classes = parse_num(key, value, "an unsigned integer")?
            }
            "synth.intra_class_edge_prob" => {
                self.synth.intra_class_edge_prob = parse_num(key, value, "a number")?
            }
            "synth.inter_class_edge_prob" => {
                self.synth.inter_class_edge_prob = parse_num(key, value, "a number")?
            }
            "synth.feature_dim" => {
                self.synth.feature_dim = parse_num(key, value, "an unsigned integer")?
            }
            "synth.class_mean_separation" => {
                self.synth.class_mean_separation = parse_num(key, value, "a number")?
            }
            "synth.feature_noise_std" => {
                self.synth.feature_noise_std = parse_num(key, value, "a number")?
            }
            "synth.labeled_fraction" => {
                self.synth.labeled_fraction = parse_num(key, value, "a number")?
            }

            "attack.family" => {
                self.attack = match value {
                    "subgraph" => AttackSpec::Subgraph(SubgraphAttackSpec::default()),
                    "feature" => AttackSpec::Feature(FeatureAttackSpec::default()),
                    other => {
                        return Err(Error::InvalidConfig(format!(
                            "attack.family must be subgraph or feature, got '{other}'"
                        )))
                    }
                }
            }
            "attack.mode" => match &mut self.attack {
                AttackSpec::Subgraph(s) => {
                    s.feature_mode = match value {
                        "random" => TriggerFeatureMode::Random,
                        "target_similar" => TriggerFeatureMode::TargetSimilar,
                        "in_distribution" => TriggerFeatureMode::InDistribution,
                        other => {
                            return Err(Error::InvalidConfig(format!(
                                "attack.mode must be random, target_similar, or in_distribution, got '{other}'"
                            )))
                        }
                    }
                }
                AttackSpec::Feature(_) => {
                    return Err(Error::InvalidConfig(
                        "attack.mode only applies to the subgraph family".into(),
                    ))
                }
            },
            "attack.num_targets" => {
                let n = parse_num(key, value, "an unsigned integer")?;
                match &mut self.attack {
                    AttackSpec::Subgraph(s) => s.num_targets = n,
                    AttackSpec::Feature(s) => s.num_targets = n,
                }
            }
            "attack.trigger_size" => match &mut self.attack {
                AttackSpec::Subgraph(s) => {
                    s.trigger_size = parse_num(key, value, "an unsigned integer")?
                }
                AttackSpec::Feature(_) => {
                    return Err(Error::InvalidConfig(
                        "attack.trigger_size only applies to the subgraph family".into(),
                    ))
                }
            },
            "attack.similar_noise_std" => match &mut self.attack {
                AttackSpec::Subgraph(s) => {
                    s.similar_noise_std = parse_num(key, value, "a number")?
                }
                AttackSpec::Feature(_) => {
                    return Err(Error::InvalidConfig(
                        "attack.similar_noise_std only applies to the subgraph family".into(),
                    ))
                }
            },
            "attack.trigger_value" => match &mut self.attack {
                AttackSpec::Feature(s) => {
                    s.trigger_value = if value == "auto" {
                        None
                    } else {
                        Some(parse_num(key, value, "a number or 'auto'")?)
                    }
                }
                AttackSpec::Subgraph(_) => {
                    return Err(Error::InvalidConfig(
                        "attack.trigger_value only applies to the feature family".into(),
                    ))
                }
            },

            "crm.hidden_dim" => self.crm.hidden_dim = parse_num(key, value, "an unsigned integer")?,
            "crm.alpha" => self.crm.alpha = parse_num(key, value, "a number")?,
            "crm.beta" => self.crm.beta = parse_num(key, value, "a number")?,
            "crm.aggregation" => self.crm.aggregation = Aggregation::parse(value)?,
            "crm.epochs" => self.crm.epochs = parse_num(key, value, "an unsigned integer")?,
            "crm.learning_rate" => self.crm.learning_rate = parse_num(key, value, "a number")?,
            "crm.weight_decay" => self.crm.weight_decay = parse_num(key, value, "a number")?,

            "detect.rho" => self.detect.rho = parse_num(key, value, "a number")?,
            "detect.tau" => self.detect.tau = parse_num(key, value, "a number")?,
            "detect.orientation" => {
                self.detect.orientation = match value {
                    "increasing" => ScoreOrientation::Increasing,
                    "decreasing" => ScoreOrientation::Decreasing,
                    other => {
                        return Err(Error::InvalidConfig(format!(
                            "detect.orientation must be increasing or decreasing, got '{other}'"
                        )))
                    }
                }
            }

            "robust.hidden_dim" => {
                self.robust.hidden_dim = parse_num(key, value, "an unsigned integer")?
            }
            "robust.epochs" => self.robust.epochs = parse_num(key, value, "an unsigned integer")?,
            "robust.learning_rate" => {
                self.robust.learning_rate = parse_num(key, value, "a number")?
            }
            "robust.weight_decay" => self.robust.weight_decay = parse_num(key, value, "a number")?,
            "robust.lambda" => self.robust.lambda = parse_num(key, value, "a number")?,
            "robust.weight_exp_labeled" => {
                self.robust.weight_exp_labeled = parse_num(key, value, "a number")?
            }
            "robust.weight_exp_suspect" => {
                self.robust.weight_exp_suspect = parse_num(key, value, "a number")?
            }
            "robust.unlearn_cap" => self.robust.unlearn_cap = UnlearnCap::parse(value)?,

            "homophily.similarity" => {
                self.homophily.similarity = match value {
                    "cosine" => Similarity::Cosine,
                    "inner_product" => Similarity::InnerProduct,
                    other => {
                        return Err(Error::InvalidConfig(format!(
                            "homophily.similarity must be cosine or inner_product, got '{other}'"
                        )))
                    }
                }
            }
            "homophily.aggregation" => self.homophily.aggregation = Aggregation::parse(value)?,

            other => {
                return Err(Error::InvalidConfig(format!("unknown configuration key '{other}'")))
            }
        }
        Ok(())
    }

    /// Parses `key = value` text: one assignment per line, `#` starts a
    /// comment, blank lines are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "line {}: expected 'key = value', got '{}'",
                    idx + 1,
                    line
                ))
            })?;
            self.apply_kv(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<WorkbenchConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = WorkbenchConfig::default();
        config
            .apply_text(&text)
            .map_err(|e| Error::parse(path, e.to_string()))?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::InvalidConfig("runs must be positive".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if !(-1.0..=1.0).contains(&self.prune_similarity_threshold) {
            return Err(Error::InvalidConfig(format!(
                "prune_similarity_threshold must lie in [-1, 1], got {}",
                self.prune_similarity_threshold
            )));
        }
        self.synth.validate()?;
        if self.target_label >= self.synth.num_classes {
            return Err(Error::InvalidConfig(format!(
                "target_label {} outside [0, {})",
                self.target_label, self.synth.num_classes
            )));
        }
        self.crm.validate()?;
        self.detect.validate()?;
        self.robust.validate()?;
        Ok(())
    }

    /// Canonical sorted `key = value` dump of every setting.
    pub fn resolved_lines(&self) -> Vec<String> {
        let mut lines: Vec<String> = Vec::new();
        let mut push = |key: &str, value: String| lines.push(format!("{key} = {value}"));

        match &self.attack {
            AttackSpec::Subgraph(s) => {
                push("attack.family", "subgraph".into());
                let mode = match s.feature_mode {
                    TriggerFeatureMode::Random => "random",
                    TriggerFeatureMode::TargetSimilar => "target_similar",
                    TriggerFeatureMode::InDistribution => "in_distribution",
                };
                push("attack.mode", mode.into());
                push("attack.num_targets", s.num_targets.to_string());
                push("attack.similar_noise_std", s.similar_noise_std.to_string());
                push("attack.trigger_size", s.trigger_size.to_string());
            }
            AttackSpec::Feature(s) => {
                push("attack.family", "feature".into());
                push("attack.num_targets", s.num_targets.to_string());
                push(
                    "attack.trigger_value",
                    s.trigger_value.map_or("auto".into(), |v| v.to_string()),
                );
            }
        }
        push("crm.aggregation", self.crm.aggregation.as_str().into());
        push("crm.alpha", self.crm.alpha.to_string());
        push("crm.beta", self.crm.beta.to_string());
        push("crm.epochs", self.crm.epochs.to_string());
        push("crm.hidden_dim", self.crm.hidden_dim.to_string());
        push("crm.learning_rate", self.crm.learning_rate.to_string());
        push("crm.weight_decay", self.crm.weight_decay.to_string());
        push(
            "detect.orientation",
            match self.detect.orientation {
                ScoreOrientation::Increasing => "increasing".into(),
                ScoreOrientation::Decreasing => "decreasing".into(),
            },
        );
        push("detect.rho", self.detect.rho.to_string());
        push("detect.tau", self.detect.tau.to_string());
        push(
            "homophily.aggregation",
            self.homophily.aggregation.as_str().into(),
        );
        push(
            "homophily.similarity",
            match self.homophily.similarity {
                Similarity::Cosine => "cosine".into(),
                Similarity::InnerProduct => "inner_product".into(),
            },
        );
        push(
            "prune_similarity_threshold",
            self.prune_similarity_threshold.to_string(),
        );
        push("robust.epochs", self.robust.epochs.to_string());
        push("robust.hidden_dim", self.robust.hidden_dim.to_string());
        push("robust.lambda", self.robust.lambda.to_string());
        push("robust.learning_rate", self.robust.learning_rate.to_string());
        push("robust.unlearn_cap", self.robust.unlearn_cap.as_str().into());
        push("robust.weight_decay", self.robust.weight_decay.to_string());
        push(
            "robust.weight_exp_labeled",
            self.robust.weight_exp_labeled.to_string(),
        );
        push(
            "robust.weight_exp_suspect",
            self.robust.weight_exp_suspect.to_string(),
        );
        push("runs", self.runs.to_string());
        push("seed", self.seed.to_string());
        push(
            "synth.class_mean_separation",
            self.synth.class_mean_separation.to_string(),
        );
        push("synth.feature_dim", self.synth.feature_dim.to_string());
        push(
            "synth.feature_noise_std",
            self.synth.feature_noise_std.to_string(),
        );
        push(
            "synth.inter_class_edge_prob",
            self.synth.inter_class_edge_prob.to_string(),
        );
        push(
            "synth.intra_class_edge_prob",
            self.synth.intra_class_edge_prob.to_string(),
        );
        push(
            "synth.labeled_fraction",
            self.synth.labeled_fraction.to_string(),
        );
        push("synth.num_classes", self.synth.num_classes.to_string());
        push("synth.num_nodes", self.synth.num_nodes.to_string());
        push("target_label", self.target_label.to_string());
        push("train_fraction", self.train_fraction.to_string());

        lines.sort();
        lines
    }

    /// SHA-256 over the canonical dump, hex encoded.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for line in self.resolved_lines() {
            hasher.update(line.as_bytes());
            hasher.update(b"\n");
        }
        let mut hex = String::with_capacity(64);
        for byte in hasher.finalize() {
            let _ = write!(hex, "{byte:02x}");
        }
        hex
    }

    /// Writes the canonical dump, digest first as a comment.
    pub fn write_resolved(&self, path: &Path) -> Result<()> {
        let mut lines = vec![format!("# config digest sha256:{}", self.digest())];
        lines.extend(self.resolved_lines());
        crate::io::write_lines(path, &lines)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_seed_is_stable_and_tag_sensitive() {
        let a = derive_seed(42, "synth");
        assert_eq!(a, derive_seed(42, "synth"));
        assert_ne!(a, derive_seed(42, "split"));
        assert_ne!(a, derive_seed(43, "synth"));
        // Concatenation ambiguity: (1, "ab") and base 1 with "a" + "b"
        // re-derived must differ from a single pass over "b".
        assert_ne!(derive_seed(derive_seed(1, "a"), "b"), derive_seed(1, "ab"));
    }

    #[test]
    fn default_config_validates() {
        WorkbenchConfig::default().validate().unwrap();
    }

    #[test]
    fn kv_roundtrip_through_resolved_lines() {
        let mut config = WorkbenchConfig::default();
        config.apply_kv("seed", "7").unwrap();
        config.apply_kv("detect.rho", "0.05").unwrap();
        config.apply_kv("attack.family", "feature").unwrap();
        config.apply_kv("attack.trigger_value", "2.5").unwrap();

        let mut rebuilt = WorkbenchConfig::default();
        for line in config.resolved_lines() {
            let (k, v) = line.split_once('=').unwrap();
            rebuilt.apply_kv(k.trim(), v).unwrap();
        }
        assert_eq!(rebuilt, config);
        assert_eq!(rebuilt.digest(), config.digest());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut config = WorkbenchConfig::default();
        let err = config.apply_kv("detect.rh", "0.05").unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }

    #[test]
    fn family_specific_keys_require_their_family() {
        let mut config = WorkbenchConfig::default();
        assert!(config.apply_kv("attack.trigger_value", "1.0").is_err());
        config.apply_kv("attack.family", "feature").unwrap();
        assert!(config.apply_kv("attack.trigger_value", "1.0").is_ok());
        assert!(config.apply_kv("attack.mode", "random").is_err());
        assert!(config.apply_kv("attack.trigger_size", "3").is_err());
    }

    #[test]
    fn switching_family_resets_family_defaults() {
        let mut config = WorkbenchConfig::default();
        config.apply_kv("attack.trigger_size", "7").unwrap();
        config.apply_kv("attack.family", "feature").unwrap();
        config.apply_kv("attack.family", "subgraph").unwrap();
        match &config.attack {
            AttackSpec::Subgraph(s) => assert_eq!(s.trigger_size, 3),
            _ => panic!("expected subgraph family"),
        }
    }

    #[test]
    fn text_parsing_handles_comments_and_blanks() {
        let mut config = WorkbenchConfig::default();
        config
            .apply_text(
                "# experiment setup\n\nseed = 9\ndetect.tau = 0.25  # sharper scores\n",
            )
            .unwrap();
        assert_eq!(config.seed, 9);
        assert_eq!(config.detect.tau, 0.25);
        assert!(config.apply_text("just words\n").is_err());
        assert!(config.apply_text("detect.tau = fast\n").is_err());
    }

    #[test]
    fn digest_tracks_content() {
        let base = WorkbenchConfig::default();
        let mut tweaked = base.clone();
        tweaked.apply_kv("detect.tau", "0.51").unwrap();
        assert_ne!(base.digest(), tweaked.digest());
        assert_eq!(base.digest().len(), 64);
    }

    #[test]
    fn validate_catches_cross_field_issues() {
        let mut config = WorkbenchConfig::default();
        config.apply_kv("target_label", "5").unwrap();
        assert!(config.validate().is_err());
        let mut config = WorkbenchConfig::default();
        config.apply_kv("train_fraction", "1.0").unwrap();
        assert!(config.validate().is_err());
    }

    #[test]
    fn resolved_file_is_deterministic() {
        let config = WorkbenchConfig::default();
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.conf");
        let b = dir.path().join("b.conf");
        config.write_resolved(&a).unwrap();
        config.write_resolved(&b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        // The dump itself parses back to the same config.
        let reloaded = WorkbenchConfig::load(&a).unwrap();
        assert_eq!(reloaded, config);
    }
}
