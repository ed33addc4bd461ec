use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use textsep::corpus::KnowledgeMode;
use textsep::dsp::wav::WavFormat;
use textsep::dsp::StftConfig;
use textsep::separator::{SeparatorConfig, TrainConfig};
use textsep::text::prompt::max_shots;
use textsep::text::{CaptionerSpec, LlmBackendSpec, Task, DEFAULT_TOKEN_BUDGET};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FewShot {
    pub source_parse_k: usize,
    pub knowledge_parse_k: usize,
}

impl Default for FewShot {
    fn default() -> Self {
        Self { source_parse_k: 5, knowledge_parse_k: 5 }
    }
}

/// Settings for `separate` and `parse`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub stft: StftConfig,
    pub checkpoint: Option<PathBuf>,
    pub captioner: CaptionerSpec,
    pub llm: LlmBackendSpec,
    pub fewshot: FewShot,
    pub token_budget: usize,
    /// Corpus whose class table the offline LLM describes; the built-in
    /// classes when unset.
    pub corpus: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub parallelism: usize,
    pub wav_format: WavFormat,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            stft: StftConfig::default(),
            checkpoint: None,
            captioner: CaptionerSpec::default(),
            llm: LlmBackendSpec::default(),
            fewshot: FewShot::default(),
            token_budget: DEFAULT_TOKEN_BUDGET,
            corpus: None,
            output_dir: PathBuf::from("out"),
            parallelism: 4,
            wav_format: WavFormat::default(),
        }
    }
}

fn must_exist(what: &str, p: &Path) -> Result<(), CliError> {
    if p.exists() {
        Ok(())
    } else {
        Err(CliError::Io(format!("{what} not found: {}", p.display())))
    }
}

/// Parses TOML or JSON by file extension (`.json` is JSON, anything else TOML).
pub fn read_document<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let cfg: Self = read_document(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.stft.validate()?;
        for (task, k) in [(Task::SourceParse, self.fewshot.source_parse_k), (Task::KnowledgeParse, self.fewshot.knowledge_parse_k)] {
            let max = max_shots(task);
            if k == 0 || k > max {
                return Err(CliError::Config(format!("{task:?} k = {k} is outside 1..={max}")));
            }
        }
        if self.parallelism == 0 || self.token_budget == 0 {
            return Err(CliError::Config("parallelism and token_budget must be positive".into()));
        }
        if let Some(p) = &self.checkpoint {
            must_exist("checkpoint", p)?;
        }
        if let Some(p) = &self.captioner.registry {
            must_exist("caption registry", p)?;
        }
        if let Some(p) = &self.corpus {
            must_exist("corpus index", &p.join("index.json"))?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        hash_json(self)
    }
}

pub fn hash_json<T: Serialize>(v: &T) -> String {
    let json = serde_json::to_vec(v).expect("value serializes");
    hex::encode(Sha256::digest(json))
}

/// Network size for `train`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    #[default]
    Default,
    Small,
    Micro,
    Full,
}

impl Preset {
    pub fn config(self) -> SeparatorConfig {
        match self {
            Preset::Default => SeparatorConfig::default(),
            Preset::Small => SeparatorConfig::small(),
            Preset::Micro => SeparatorConfig::micro(),
            Preset::Full => SeparatorConfig::full(),
        }
    }
}

/// Settings for `train`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainJob {
    pub schema_version: u32,
    pub corpus: Option<PathBuf>,
    pub preset: Preset,
    /// Replaces the preset entirely when given.
    pub separator: Option<SeparatorConfig>,
    pub train: TrainConfig,
    pub knowledge_mode: KnowledgeMode,
    /// Classes to train on; all corpus classes when unset.
    pub classes: Option<Vec<String>>,
}

impl Default for TrainJob {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            corpus: None,
            preset: Preset::Default,
            separator: None,
            train: TrainConfig::default(),
            knowledge_mode: KnowledgeMode::Enriched,
            classes: None,
        }
    }
}

impl TrainJob {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let job: Self = read_document(path)?;
        job.validate()?;
        Ok(job)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!("schema_version {} is not supported", self.schema_version)));
        }
        self.separator_config().validate()?;
        self.train.validate()?;
        Ok(())
    }

    pub fn separator_config(&self) -> SeparatorConfig {
        self.separator.unwrap_or_else(|| self.preset.config())
    }
}

/// Settings for `mixgen`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixgenJob {
    pub schema_version: u32,
    pub corpus: Option<PathBuf>,
    pub count: usize,
    pub seed: u64,
    pub knowledge_mode: KnowledgeMode,
    pub held_out: bool,
    pub out: Option<PathBuf>,
}

impl Default for MixgenJob {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            corpus: None,
            count: 100,
            seed: 0,
            knowledge_mode: KnowledgeMode::Enriched,
            held_out: false,
            out: None,
        }
    }
}

/// Settings for `evaluate`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalJob {
    pub schema_version: Option<u32>,
    pub estimates: Option<PathBuf>,
    pub references: Option<PathBuf>,
    pub manifests: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub oracle: bool,
    pub out: Option<PathBuf>,
}
