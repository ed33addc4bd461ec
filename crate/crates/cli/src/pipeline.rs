//! caption → parse sources → parse knowledge → separate.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use textsep::corpus::{default_classes, Corpus};
use textsep::dsp::wav::{read_wav, write_wav};
use textsep::dsp::{apply_mask_and_reconstruct, stft, Mask, Waveform};
use textsep::separator::{Checkpoint, MaskPredictor, SeparatorModel};
use textsep::text::{
    build_fewshot_prompt, caption_audio, parse_knowledge, parse_sources, Caption, KnowledgeCard, LlmBackend, MockLlm,
    Task,
};

use crate::config::{hash_json, PipelineConfig, SCHEMA_VERSION};
use crate::error::{io_err, CliError};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    LoadInput,
    Caption,
    ParseSources,
    ParseKnowledge,
    Separate,
    WriteOutputs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    /// The caption named no sources; nothing was separated.
    Empty,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub source: String,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub input: String,
    pub config_hash: String,
    pub status: RunStatus,
    pub failed_stage: Option<Stage>,
    pub error: Option<String>,
    pub caption: Option<Caption>,
    pub sources: Vec<String>,
    pub knowledge: Vec<KnowledgeCard>,
    pub outputs: Vec<OutputRecord>,
    pub warnings: Vec<String>,
    /// Seconds per completed stage; excluded from `content_hash`.
    pub timings: BTreeMap<Stage, f64>,
    pub content_hash: String,
}

impl RunManifest {
    fn new(input: &Path, cfg: &PipelineConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tool_version: TOOL_VERSION.to_string(),
            input: input.display().to_string(),
            config_hash: cfg.hash(),
            status: RunStatus::Ok,
            failed_stage: None,
            error: None,
            caption: None,
            sources: Vec::new(),
            knowledge: Vec::new(),
            outputs: Vec::new(),
            warnings: Vec::new(),
            timings: BTreeMap::new(),
            content_hash: String::new(),
        }
    }

    /// Hash over every field except `timings` and the hash itself.
    pub fn compute_hash(&self) -> String {
        let mut m = self.clone();
        m.timings.clear();
        m.content_hash.clear();
        hash_json(&m)
    }

    pub fn write(&mut self, path: &Path) -> Result<(), CliError> {
        self.content_hash = self.compute_hash();
        let json = serde_json::to_string_pretty(self).map_err(|e| CliError::Other(e.to_string()))?;
        std::fs::write(path, json + "\n").map_err(|e| io_err(path, e))
    }
}

/// Lowercase ASCII words joined by `-`, at most 40 characters.
pub fn slug(text: &str) -> String {
    let words: Vec<String> = text
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_ascii_lowercase)
        .collect();
    let mut out = String::new();
    for w in words {
        if !out.is_empty() && out.len() + 1 + w.len() > 40 {
            break;
        }
        if !out.is_empty() {
            out.push('-');
        }
        out.push_str(&w);
    }
    if out.is_empty() {
        "source".into()
    } else {
        out.chars().take(40).collect()
    }
}

fn input_stem(input: &Path) -> String {
    input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "input".into())
}

pub fn output_name(stem: &str, k: usize, source: &str) -> String {
    format!("{stem}.src{k}.{}.wav", slug(source))
}

pub fn manifest_path(out_dir: &Path, input: &Path) -> PathBuf {
    out_dir.join(format!("{}.manifest.json", input_stem(input)))
}

/// The offline LLM, describing the configured corpus classes (or the
/// built-in ones at the input's duration).
pub fn mock_llm(cfg: &PipelineConfig, clip_seconds: f64) -> Result<MockLlm, CliError> {
    Ok(match &cfg.corpus {
        Some(root) => {
            let corpus = Corpus::load(root)?;
            MockLlm::new(corpus.index.classes.clone(), corpus.index.clip_seconds)
        }
        None => MockLlm::new(default_classes(), clip_seconds),
    })
}

/// Masks for every prompt, fanned out over up to `parallelism` threads.
pub fn predict_parallel(
    model: &dyn MaskPredictorSync,
    mag: &textsep::dsp::MagnitudeSpectrogram,
    prompts: &[String],
    parallelism: usize,
) -> textsep::Result<Vec<Mask>> {
    if prompts.is_empty() {
        return Ok(Vec::new());
    }
    let per = prompts.len().div_ceil(parallelism.max(1));
    std::thread::scope(|s| {
        let handles: Vec<_> = prompts.chunks(per).map(|chunk| s.spawn(move || model.predict_masks(mag, chunk))).collect();
        let mut out = Vec::with_capacity(prompts.len());
        for h in handles {
            out.extend(h.join().expect("mask worker panicked")?);
        }
        Ok(out)
    })
}

/// A mask predictor that can be shared across threads.
pub trait MaskPredictorSync: MaskPredictor + Sync {}
impl<T: MaskPredictor + Sync> MaskPredictorSync for T {}

/// Result of a pipeline run: the manifest (always written) and the error
/// that stopped it, if any.
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub manifest_path: PathBuf,
    pub error: Option<CliError>,
}

struct Runner<'a> {
    manifest: RunManifest,
    cfg: &'a PipelineConfig,
}

impl Runner<'_> {
    fn stage<T>(&mut self, stage: Stage, f: impl FnOnce() -> Result<T, CliError>) -> Result<T, CliError> {
        let t = Instant::now();
        match f() {
            Ok(v) => {
                self.manifest.timings.insert(stage, t.elapsed().as_secs_f64());
                Ok(v)
            }
            Err(e) => {
                self.manifest.status = RunStatus::Failed;
                self.manifest.failed_stage = Some(stage);
                self.manifest.error = Some(e.to_string());
                Err(e)
            }
        }
    }
}

fn load_model(cfg: &PipelineConfig) -> Result<SeparatorModel, CliError> {
    let path = cfg
        .checkpoint
        .as_ref()
        .ok_or_else(|| CliError::Config("separation needs a checkpoint".into()))?;
    let model = Checkpoint::load(path)?.model;
    if model.config.stft != cfg.stft {
        return Err(CliError::Config("checkpoint STFT settings differ from the pipeline's".into()));
    }
    Ok(model)
}

/// Text stages only. Stops after source parsing when it finds nothing.
fn text_stages(r: &mut Runner, x: &Waveform, llm: &dyn LlmBackend) -> Result<(), CliError> {
    let cfg = r.cfg;
    let caption = r.stage(Stage::Caption, || Ok(caption_audio(x, cfg.captioner.build()?.as_ref())?))?;
    r.manifest.caption = Some(caption.clone());
    let sources = r.stage(Stage::ParseSources, || {
        let prompt = build_fewshot_prompt(Task::SourceParse, cfg.fewshot.source_parse_k)?;
        Ok(parse_sources(&caption, &prompt, llm)?)
    })?;
    r.manifest.sources = sources.sources.clone();
    if sources.is_empty() {
        r.manifest.status = RunStatus::Empty;
        let msg = format!("caption {:?} names no sources; nothing to separate", caption.text);
        log::warn!("{msg}");
        r.manifest.warnings.push(msg);
        return Ok(());
    }
    let cards = r.stage(Stage::ParseKnowledge, || {
        let prompt = build_fewshot_prompt(Task::KnowledgeParse, cfg.fewshot.knowledge_parse_k)?;
        sources
            .sources
            .iter()
            .map(|s| Ok(parse_knowledge(s, &prompt, llm, cfg.token_budget)?))
            .collect::<Result<Vec<_>, CliError>>()
    })?;
    r.manifest.knowledge = cards;
    Ok(())
}

fn build_llm(cfg: &PipelineConfig, x: &Waveform) -> Result<Box<dyn LlmBackend>, CliError> {
    let spec = cfg.llm.clone().with_env();
    Ok(spec.build(mock_llm(cfg, x.duration_secs())?)?)
}

fn run(input: &Path, cfg: &PipelineConfig, out_dir: &Path, separate: bool) -> RunOutcome {
    let mut r = Runner { manifest: RunManifest::new(input, cfg), cfg };
    let result = (|| -> Result<(), CliError> {
        let x = r.stage(Stage::LoadInput, || Ok(read_wav(input, None)?))?;
        let model = if separate { Some(r.stage(Stage::LoadInput, || load_model(cfg))?) } else { None };
        let llm = r.stage(Stage::ParseSources, || build_llm(cfg, &x))?;
        text_stages(&mut r, &x, llm.as_ref())?;
        let Some(model) = model else { return Ok(()) };
        if r.manifest.status == RunStatus::Empty {
            return Ok(());
        }
        let prompts: Vec<String> = r.manifest.knowledge.iter().map(|c| c.full_text.clone()).collect();
        let waves = r.stage(Stage::Separate, || {
            let spec = stft(&x, &cfg.stft)?;
            let masks = predict_parallel(&model, &spec.magnitude(), &prompts, cfg.parallelism)?;
            Ok(masks.iter().map(|m| apply_mask_and_reconstruct(&spec, m)).collect::<textsep::Result<Vec<_>>>()?)
        })?;
        let stem = input_stem(input);
        let sources = r.manifest.sources.clone();
        let outputs = r.stage(Stage::WriteOutputs, || {
            std::fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
            sources
                .iter()
                .zip(&waves)
                .enumerate()
                .map(|(k, (src, w))| {
                    let name = output_name(&stem, k + 1, src);
                    write_wav(out_dir.join(&name), w, cfg.wav_format)?;
                    Ok(OutputRecord { source: src.clone(), path: name })
                })
                .collect::<Result<Vec<_>, CliError>>()
        })?;
        r.manifest.outputs = outputs;
        Ok(())
    })();
    let manifest_path = manifest_path(out_dir, input);
    let mut manifest = r.manifest;
    let write = std::fs::create_dir_all(out_dir)
        .map_err(|e| io_err(out_dir, e))
        .and_then(|_| manifest.write(&manifest_path));
    let error = match (result, write) {
        (Err(e), _) => Some(e),
        (Ok(()), Err(e)) => Some(e),
        (Ok(()), Ok(())) => None,
    };
    RunOutcome { manifest, manifest_path, error }
}

/// Full pipeline: one WAV per parsed source plus `<stem>.manifest.json`.
pub fn run_separation(input: &Path, cfg: &PipelineConfig, out_dir: &Path) -> RunOutcome {
    run(input, cfg, out_dir, true)
}

/// Captioning and parsing only; writes the manifest without outputs.
pub fn run_parse(input: &Path, cfg: &PipelineConfig, out_dir: &Path) -> RunOutcome {
    run(input, cfg, out_dir, false)
}
