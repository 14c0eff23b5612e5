//! Experiment configuration: one JSON document, unknown keys rejected.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use proxylab::dyck::{DyckSpec, SplitName, SplitSizes};
use proxylab::model::{ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DyckSection {
    pub spec: DyckSpec,
    pub sizes: SplitSizes,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeSection {
    /// NDJSON with `language` and `code` fields.
    pub input: PathBuf,
    pub train_language: String,
    #[serde(default = "default_code_depth")]
    pub max_depth: u32,
    #[serde(default = "default_code_len")]
    pub max_len: usize,
    /// Keyword list, one per line; the bundled Java list when absent.
    #[serde(default)]
    pub keywords: Option<PathBuf>,
    /// Without partition tags, every n-th eligible training-language
    /// function is held out as the in-domain evaluation split.
    #[serde(default = "default_heldout_every")]
    pub heldout_every: usize,
}

fn default_heldout_every() -> usize {
    10
}

fn default_code_depth() -> u32 {
    3
}

fn default_code_len() -> usize {
    512
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Target head for Dyck sweeps; code sweeps cover every head.
    #[serde(default = "default_layer")]
    pub layer: usize,
    #[serde(default)]
    pub head: usize,
    #[serde(default)]
    pub svd_ranks: Vec<usize>,
    #[serde(default)]
    pub kmeans_clusters: Vec<usize>,
    #[serde(default)]
    pub one_hot: bool,
    #[serde(default = "default_fit_sequences")]
    pub fit_sequences: usize,
    /// Evaluation splits; all non-train splits when empty.
    #[serde(default)]
    pub splits: Vec<SplitName>,
    #[serde(default = "default_min_distance")]
    pub min_distance: usize,
    /// Sequences per split to evaluate; all when absent.
    #[serde(default)]
    pub eval_limit: Option<usize>,
    /// Singular vectors exported for the highest-rank SVD simplifier.
    #[serde(default = "default_components")]
    pub projection_components: Vec<usize>,
}

fn default_layer() -> usize {
    1
}

fn default_components() -> Vec<usize> {
    vec![0, 1, 2]
}

fn default_fit_sequences() -> usize {
    1000
}

fn default_min_distance() -> usize {
    proxylab::dyck::DEFAULT_MIN_DISTANCE
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InspectSection {
    /// Texts (code) or bracket strings (Dyck) to inspect.
    pub texts: Vec<String>,
    /// Heatmap size in characters.
    #[serde(default = "default_inspect_chars")]
    pub first_n: usize,
}

fn default_inspect_chars() -> usize {
    64
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub dyck: Option<DyckSection>,
    #[serde(default)]
    pub code: Option<CodeSection>,
    /// Derived from the task when absent.
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub inspect: Option<InspectSection>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let unknown = unknown_keys(&value);
        if !unknown.is_empty() {
            bail!("unknown config keys: {}", unknown.join(", "));
        }
        let cfg: Self = serde_json::from_value(value)?;
        if let Some(d) = &cfg.dyck {
            d.spec.validate()?;
        }
        if let Some(m) = &cfg.model {
            m.validate()?;
        }
        if let Some(t) = &cfg.train {
            t.validate()?;
        }
        Ok(cfg)
    }

    pub fn dyck(&self) -> Result<&DyckSection> {
        self.dyck.as_ref().context("config has no `dyck` section")
    }

    pub fn code(&self) -> Result<&CodeSection> {
        self.code.as_ref().context("config has no `code` section")
    }

    pub fn sweep(&self) -> Result<&SweepSection> {
        self.sweep.as_ref().context("config has no `sweep` section")
    }

    pub fn train_config(&self) -> TrainConfig {
        let mut t = self.train.clone().unwrap_or_default();
        t.seed = self.seed;
        t
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        if let Some(m) = &self.model {
            return Ok(m.clone());
        }
        if let Some(d) = &self.dyck {
            return Ok(ModelConfig::dyck(d.spec.bracket_types, d.spec.max_len));
        }
        if self.code.is_some() {
            return Ok(ModelConfig::code_desk(proxylab::code::CharVocab::SIZE));
        }
        bail!("cannot derive a model config without `model`, `dyck` or `code`")
    }
}

/// Lists every key path in `value` that the schema does not know, so the
/// error names all offenders at once.
fn unknown_keys(value: &serde_json::Value) -> Vec<String> {
    const TOP: &[&str] = &["seed", "out_dir", "dyck", "code", "model", "train", "sweep", "inspect"];
    const SECTIONS: &[(&str, &[&str])] = &[
        ("dyck", &["spec", "sizes"]),
        (
            "code",
            &["input", "train_language", "max_depth", "max_len", "keywords", "heldout_every"],
        ),
        (
            "model",
            &[
                "layers",
                "heads",
                "model_dim",
                "head_dim",
                "mlp_dim",
                "max_len",
                "vocab_size",
                "dropout",
                "tie_embeddings",
                "layer_norm",
            ],
        ),
        (
            "train",
            &[
                "steps",
                "batch_size",
                "beta1",
                "beta2",
                "epsilon",
                "weight_decay",
                "warmup_steps",
                "peak_lr",
                "seed",
                "eval_every",
                "eval_sample",
                "checkpoint_every",
            ],
        ),
        (
            "sweep",
            &[
                "layer",
                "head",
                "svd_ranks",
                "kmeans_clusters",
                "one_hot",
                "fit_sequences",
                "splits",
                "min_distance",
                "eval_limit",
                "projection_components",
            ],
        ),
        ("inspect", &["texts", "first_n"]),
    ];
    const NESTED: &[(&str, &str, &[&str])] = &[
        ("dyck", "spec", &["bracket_types", "max_depth", "max_len"]),
        (
            "dyck",
            "sizes",
            &[
                "train",
                "iid",
                "seen_struct",
                "unseen_struct_short",
                "unseen_struct_long",
                "unseen_depth",
            ],
        ),
    ];
    let mut out = Vec::new();
    let Some(obj) = value.as_object() else {
        return out;
    };
    for (k, v) in obj {
        if !TOP.contains(&k.as_str()) {
            out.push(k.clone());
            continue;
        }
        let Some((_, allowed)) = SECTIONS.iter().find(|(s, _)| s == k) else {
            continue;
        };
        let Some(sec) = v.as_object() else { continue };
        for (k2, v2) in sec {
            if !allowed.contains(&k2.as_str()) {
                out.push(format!("{k}.{k2}"));
                continue;
            }
            if let Some((_, _, allowed3)) = NESTED.iter().find(|(a, b, _)| a == k && b == k2) {
                if let Some(inner) = v2.as_object() {
                    out.extend(
                        inner
                            .keys()
                            .filter(|k3| !allowed3.contains(&k3.as_str()))
                            .map(|k3| format!("{k}.{k2}.{k3}")),
                    );
                }
            }
        }
    }
    out
}
