//! Flat `key = value` run configuration.
//!
//! Every knob lives in [`KEYS`]. The same table drives config-file parsing,
//! command-line flags, `--help` and the manifest snapshot, so there is no
//! setting that can be changed in one place but not the others.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use hin_embed::eval::LinkFeature;
use hin_embed::measures::Measure;
use hin_embed::synth::SynthConfig;
use hin_embed::{CategorizationPolicy, Category, Norm, TrainConfig, Variant};

/// Environment variable supplying the default for `threads`.
pub const THREADS_ENV: &str = "HINEMBED_THREADS";

pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

const fn key(name: &'static str, default: &'static str, help: &'static str) -> Key {
    Key { name, default, help }
}

pub const KEYS: &[Key] = &[
    key("nodes", "", "nodes TSV: node_id, node_type"),
    key("edges", "", "edges TSV: src_id, dst_id, edge_type[, weight]"),
    key("schema", "", "schema TSV: edge types and meta-paths"),
    key("labels", "", "label TSV (node_id, label); enables clustering and classification"),
    key("triples", "", "precomputed triple TSV (u, relation, v, w) used instead of extraction"),
    key("embeddings", "", "node embedding TSV evaluated instead of the trained model"),
    key("split", "", "link split file; generated from link_relation when empty"),
    key("resume", "", "checkpoint to continue training from"),
    key("out_dir", "out", "directory for artifacts and the run manifest"),
    key("stages", "analyze,extract,train,eval,export", "stages executed by `run`"),
    key("relations", "", "comma-separated relations to embed; empty means all schema relations"),
    key("measure", "degree_ratio", "categorization measure: degree_ratio, sparsity or both"),
    key("d_threshold", "10", "degree ratio above which a relation is an AR"),
    key("s_threshold", "0.01", "sparsity above which a relation is an AR"),
    key("overrides", "", "forced categories, e.g. AP:AR,PC:IR"),
    key("dim", "100", "embedding dimension"),
    key("negatives", "3", "corrupted triples per positive"),
    key("gamma", "1", "hinge margin"),
    key("norm", "l2", "translation distance: l1 or l2"),
    key("lr", "0.005", "SGD learning rate"),
    key("lr_decay", "false", "decay the learning rate linearly over the epochs"),
    key("epochs", "100", "training epochs"),
    key("samples_per_epoch", "", "positive samples per epoch; empty means one per triple"),
    key("seed", "0", "training seed"),
    key("variant", "rhine", "model variant: rhine, eu, tr or reversed"),
    key("threads", "1", "training threads; 1 is the deterministic mode (env HINEMBED_THREADS)"),
    key("filter_negatives", "false", "redraw corruptions that are known positives"),
    key("max_norm", "", "clip node embeddings to this L2 norm; empty disables"),
    key("divergence_factor", "10", "abort when epoch loss exceeds this multiple of the first"),
    key("checkpoint_every", "0", "also checkpoint every N epochs; 0 only at the end"),
    key("link_relation", "", "atomic relation held out for link prediction"),
    key("test_fraction", "0.2", "share of link_relation pairs held out"),
    key("link_feature", "hadamard", "link classifier feature: hadamard or score"),
    key("split_seed", "1", "seed of the link split"),
    key("eval_seed", "0", "seed of k-means and the classification split"),
    key("variants", "rhine,eu,tr,reversed", "variants compared by the variants stage"),
    key("synth_preset", "default", "synthetic network preset: default (968 nodes) or small (200 nodes)"),
    key("synth_communities", "", "communities (empty: preset value)"),
    key("synth_authors", "", "authors per community (empty: preset value)"),
    key("synth_papers", "", "papers per community (empty: preset value)"),
    key("synth_venues", "", "venues per community (empty: preset value)"),
    key("synth_authors_per_paper", "", "authors per paper (empty: preset value)"),
    key("synth_author_noise", "", "cross-community authorship probability (empty: preset value)"),
    key("synth_venue_noise", "", "cross-community venue probability (empty: preset value)"),
    key("synth_seed", "", "generator seed (empty: preset value)"),
];

pub fn find_key(name: &str) -> Option<&'static Key> {
    KEYS.iter().find(|k| k.name == name)
}

/// Maps `d_threshold` to the flag spelling `d-threshold`.
pub fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

#[derive(Debug, PartialEq)]
pub enum ConfigError {
    UnknownKey { key: String, line: Option<usize> },
    Syntax { line: usize, text: String },
    Duplicate { key: String, line: usize },
    Value { key: String, value: String, expected: String },
    Io(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::UnknownKey { key, line: Some(l) } => write!(f, "line {l}: unknown config key `{key}`"),
            ConfigError::UnknownKey { key, line: None } => write!(f, "unknown config key `{key}`"),
            ConfigError::Syntax { line, text } => write!(f, "line {line}: expected `key = value`, got `{text}`"),
            ConfigError::Duplicate { key, line } => write!(f, "line {line}: key `{key}` set twice"),
            ConfigError::Value { key, value, expected } => {
                write!(f, "config key `{key}`: expected {expected}, got `{value}`")
            }
            ConfigError::Io(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for ConfigError {}

pub type ConfigResult<T> = Result<T, ConfigError>;

/// Effective values for every key in [`KEYS`].
#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    values: BTreeMap<&'static str, String>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            values: KEYS.iter().map(|k| (k.name, k.default.to_string())).collect(),
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> ConfigResult<Config> {
        let mut cfg = Config::default();
        cfg.merge_text(text)?;
        Ok(cfg)
    }

    /// Applies the keys set in `text` on top of the current values.
    pub fn merge_text(&mut self, text: &str) -> ConfigResult<()> {
        let mut seen = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (k, v) = trimmed.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                text: trimmed.to_string(),
            })?;
            let k = k.trim();
            let key = find_key(k).ok_or_else(|| ConfigError::UnknownKey {
                key: k.to_string(),
                line: Some(line),
            })?;
            if seen.insert(key.name, line).is_some() {
                return Err(ConfigError::Duplicate {
                    key: key.name.to_string(),
                    line,
                });
            }
            self.values.insert(key.name, v.trim().to_string());
        }
        Ok(())
    }

    pub fn load(path: &Path) -> ConfigResult<Config> {
        let mut cfg = Config::default();
        cfg.merge_file(path)?;
        Ok(cfg)
    }

    pub fn merge_file(&mut self, path: &Path) -> ConfigResult<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io(format!("cannot read config {}: {e}", path.display())))?;
        self.merge_text(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> ConfigResult<()> {
        let k = find_key(key).ok_or_else(|| ConfigError::UnknownKey {
            key: key.to_string(),
            line: None,
        })?;
        self.values.insert(k.name, value.trim().to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("`{key}` is not a config key"))
    }

    /// Every key with its effective value, in key order.
    pub fn snapshot(&self) -> &BTreeMap<&'static str, String> {
        &self.values
    }

    pub fn to_text(&self) -> String {
        KEYS.iter().map(|k| format!("{} = {}\n", k.name, self.get(k.name))).collect()
    }

    fn typed<T: FromStr>(&self, key: &str, expected: &str) -> ConfigResult<T> {
        let v = self.get(key);
        v.parse().map_err(|_| ConfigError::Value {
            key: key.to_string(),
            value: v.to_string(),
            expected: expected.to_string(),
        })
    }

    fn optional<T: FromStr>(&self, key: &str, expected: &str) -> ConfigResult<Option<T>> {
        if self.get(key).is_empty() {
            Ok(None)
        } else {
            self.typed(key, expected).map(Some)
        }
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        let v = self.get(key);
        (!v.is_empty()).then(|| PathBuf::from(v))
    }

    pub fn required_path(&self, key: &str) -> ConfigResult<PathBuf> {
        self.path(key).ok_or_else(|| ConfigError::Value {
            key: key.to_string(),
            value: String::new(),
            expected: "a file path".into(),
        })
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.get("out_dir"))
    }

    pub fn list(&self, key: &str) -> Vec<String> {
        self.get(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect()
    }

    pub fn policy(&self) -> ConfigResult<CategorizationPolicy> {
        let mut overrides = BTreeMap::new();
        for item in self.list("overrides") {
            let bad = || ConfigError::Value {
                key: "overrides".into(),
                value: item.clone(),
                expected: "RELATION:AR or RELATION:IR".into(),
            };
            let (rel, cat) = item.split_once(':').ok_or_else(bad)?;
            let cat = Category::from_str(cat.trim()).map_err(|_| bad())?;
            overrides.insert(rel.trim().to_string(), cat);
        }
        Ok(CategorizationPolicy {
            measure: self.typed::<Measure>("measure", "degree_ratio, sparsity or both")?,
            d_threshold: self.typed("d_threshold", "a number")?,
            s_threshold: self.typed("s_threshold", "a number")?,
            overrides,
        })
    }

    pub fn train_config(&self) -> ConfigResult<TrainConfig> {
        Ok(TrainConfig {
            dim: self.typed("dim", "a positive integer")?,
            negatives: self.typed("negatives", "a positive integer")?,
            gamma: self.typed("gamma", "a number")?,
            ir_norm: self.typed::<Norm>("norm", "l1 or l2")?,
            lr: self.typed("lr", "a number")?,
            lr_decay: self.typed("lr_decay", "true or false")?,
            epochs: self.typed("epochs", "a non-negative integer")?,
            samples_per_epoch: self.optional("samples_per_epoch", "a positive integer")?,
            seed: self.typed("seed", "an unsigned integer")?,
            variant: self.typed::<Variant>("variant", "rhine, eu, tr or reversed")?,
            threads: self.typed("threads", "a positive integer")?,
            filter_negatives: self.typed("filter_negatives", "true or false")?,
            max_norm: self.optional("max_norm", "a number")?,
            divergence_factor: self.typed("divergence_factor", "a number")?,
        })
    }

    pub fn checkpoint_every(&self) -> ConfigResult<usize> {
        self.typed("checkpoint_every", "a non-negative integer")
    }

    pub fn test_fraction(&self) -> ConfigResult<f64> {
        self.typed("test_fraction", "a number in (0, 1)")
    }

    pub fn link_feature(&self) -> ConfigResult<LinkFeature> {
        self.typed("link_feature", "hadamard or score")
    }

    pub fn split_seed(&self) -> ConfigResult<u64> {
        self.typed("split_seed", "an unsigned integer")
    }

    pub fn eval_seed(&self) -> ConfigResult<u64> {
        self.typed("eval_seed", "an unsigned integer")
    }

    pub fn variants(&self) -> ConfigResult<Vec<Variant>> {
        self.list("variants")
            .iter()
            .map(|v| {
                v.parse().map_err(|_| ConfigError::Value {
                    key: "variants".into(),
                    value: v.clone(),
                    expected: "rhine, eu, tr or reversed".into(),
                })
            })
            .collect()
    }

    pub fn synth_config(&self) -> ConfigResult<SynthConfig> {
        let mut s = match self.get("synth_preset") {
            "default" => SynthConfig::default(),
            "small" => SynthConfig::small(),
            other => {
                return Err(ConfigError::Value {
                    key: "synth_preset".into(),
                    value: other.into(),
                    expected: "default or small".into(),
                })
            }
        };
        let int = "a positive integer";
        let prob = "a probability";
        if let Some(v) = self.optional("synth_communities", int)? {
            s.communities = v;
        }
        if let Some(v) = self.optional("synth_authors", int)? {
            s.authors_per_community = v;
        }
        if let Some(v) = self.optional("synth_papers", int)? {
            s.papers_per_community = v;
        }
        if let Some(v) = self.optional("synth_venues", int)? {
            s.venues_per_community = v;
        }
        if let Some(v) = self.optional("synth_authors_per_paper", int)? {
            s.authors_per_paper = v;
        }
        if let Some(v) = self.optional("synth_author_noise", prob)? {
            s.author_noise = v;
        }
        if let Some(v) = self.optional("synth_venue_noise", prob)? {
            s.venue_noise = v;
        }
        if let Some(v) = self.optional("synth_seed", "an unsigned integer")? {
            s.seed = v;
        }
        Ok(s)
    }
}

/// One line per key for `--help`.
pub fn key_listing() -> String {
    let width = KEYS.iter().map(|k| k.name.len()).max().unwrap_or(0);
    let mut out = String::from("Config keys (file `key = value`, or flag `--key-name value`):\n");
    for k in KEYS {
        let default = if k.default.is_empty() { "\"\"" } else { k.default };
        out += &format!("  {:width$}  {} [default: {}]\n", k.name, k.help, default);
    }
    out
}
