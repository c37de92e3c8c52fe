//! TOML run configuration. Flags override file values before hashing.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use synthq_core::hashing::canonical_hash;
use synthq_core::qd_metrics::DEFAULT_CE_THRESHOLD;
use synthq_core::synth::{GenerationConfig, Target, DEFAULT_SAMPLE_SIZE};
use synthq_core::tokenize::{StopwordTable, TokenizerSpec, TokenizerStrategy};
use synthq_core::trainer::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModeChoice {
    Diverse,
    Paraphrase,
    /// Pick by measured diversity on a document sample.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizerSection {
    pub lang: String,
    /// `regex`, `presegmented` or `sidecar`.
    pub strategy: String,
    pub stopwords_dir: Option<PathBuf>,
    pub sidecar_url: Option<String>,
}

impl Default for TokenizerSection {
    fn default() -> Self {
        Self {
            lang: "en".into(),
            strategy: "regex".into(),
            stopwords_dir: None,
            sidecar_url: None,
        }
    }
}

impl TokenizerSection {
    pub fn spec(&self) -> Result<TokenizerSpec> {
        let strategy: TokenizerStrategy = self.strategy.parse().map_err(anyhow::Error::msg)?;
        let mut spec = TokenizerSpec::new(&self.lang, strategy)?;
        if let Some(url) = &self.sidecar_url {
            spec = spec.with_sidecar(url);
        }
        Ok(spec)
    }

    pub fn stopwords(&self) -> Result<StopwordTable> {
        Ok(StopwordTable::resolve(self.stopwords_dir.as_deref(), &self.lang)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptSection {
    pub mode: ModeChoice,
    pub target: Target,
    pub sample_size: usize,
    pub sample_seed: u64,
    pub cache_dir: Option<PathBuf>,
}

impl Default for PromptSection {
    fn default() -> Self {
        Self {
            mode: ModeChoice::Auto,
            target: Target::Ood,
            sample_size: DEFAULT_SAMPLE_SIZE,
            sample_seed: 0,
            cache_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    /// `stub`, `stub:<dim>` or `sidecar:<url>`.
    pub backend: String,
    pub ce_threshold: f64,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self {
            backend: "stub".into(),
            ce_threshold: DEFAULT_CE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub k: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { k: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrelateSection {
    pub alpha: f64,
    pub bucket_boundaries: [f64; 2],
}

impl Default for CorrelateSection {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            bucket_boundaries: [7.0, 10.0],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub docs: Option<PathBuf>,
    pub human: Option<PathBuf>,
    pub synthetic: Option<PathBuf>,
    pub pairs: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub points: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub tokenizer: TokenizerSection,
    pub metrics: MetricsSection,
    pub prompt: PromptSection,
    pub generation: GenerationConfig,
    pub train: TrainConfig,
    pub eval: EvalSection,
    pub correlate: CorrelateSection,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    /// Hash of the effective configuration, after flag overrides.
    pub fn config_hash(&self) -> String {
        canonical_hash(self).expect("config serializes")
    }
}

/// `flag` when given, else the config value, else an error naming both.
pub fn required(flag: Option<PathBuf>, from_config: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    flag.or_else(|| from_config.clone())
        .with_context(|| format!("missing --{what} (or paths.{} in the config file)", what.replace('-', "_")))
}
