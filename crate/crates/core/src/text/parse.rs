//! Caption → source phrases → knowledge cards.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::backend::{Captioner, LlmBackend};
use super::prompt::{FewShotPrompt, Task};
use super::similarity::{cosine_similarity, words};
use crate::dsp::Waveform;
use crate::error::{Error, Result};

pub const DEFAULT_TOKEN_BUDGET: usize = 512;
/// Phrases at least this similar are treated as the same source.
pub const DUPLICATE_SIMILARITY: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caption {
    pub text: String,
    pub source_backend: String,
}

pub fn caption_audio(x: &Waveform, captioner: &dyn Captioner) -> Result<Caption> {
    let raw = captioner.caption(x)?;
    let text = raw.split_whitespace().collect::<Vec<_>>().join(" ");
    if text.is_empty() {
        return Err(Error::Parse { raw });
    }
    Ok(Caption {
        text,
        source_backend: captioner.name().to_string(),
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedSourceList {
    pub sources: Vec<String>,
}

impl ParsedSourceList {
    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }
}

fn normalize_phrase(p: &str) -> String {
    words(p).join(" ")
}

/// Drops exact (normalized) and near duplicates, keeping first mentions.
pub fn collapse_duplicates(phrases: Vec<String>) -> Vec<String> {
    let mut kept: Vec<String> = Vec::new();
    for p in phrases {
        let n = normalize_phrase(&p);
        let dup = kept.iter().any(|k| {
            normalize_phrase(k) == n || cosine_similarity(k, &p) >= DUPLICATE_SIMILARITY
        });
        if !dup {
            kept.push(p);
        }
    }
    kept
}

/// Splits an LLM reply into phrases: one per sentence or line, with list
/// markers removed.
pub fn split_source_reply(raw: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for line in raw.lines() {
        let line = line
            .trim()
            .trim_start_matches(['-', '*', '•'])
            .trim_start_matches(|c: char| c.is_ascii_digit())
            .trim_start_matches([')', '.'])
            .trim();
        for sentence in line.split(['.', ';']) {
            let s = sentence.trim().trim_matches('"').trim();
            if !s.is_empty() {
                out.push(s.to_string());
            }
        }
    }
    if out.len() == 1 && matches!(normalize_phrase(&out[0]).as_str(), "none" | "no sources" | "silence") {
        return Ok(Vec::new());
    }
    if out.is_empty() {
        return Err(Error::Parse { raw: raw.to_string() });
    }
    Ok(out)
}

pub fn parse_sources(caption: &Caption, prompt: &FewShotPrompt, backend: &dyn LlmBackend) -> Result<ParsedSourceList> {
    if caption.text.trim().is_empty() {
        return Err(Error::invalid("caption is empty"));
    }
    if prompt.task != Task::SourceParse {
        return Err(Error::invalid("source parsing needs a source-parse prompt"));
    }
    let raw = backend.complete(&prompt.clone().with_query(caption.text.clone()))?;
    Ok(ParsedSourceList {
        sources: collapse_duplicates(split_source_reply(&raw)?),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    FrequencyRange,
    Amplitude,
    Timbre,
    Duration,
    AttackDecay,
    Envelope,
    SpectralContent,
}

impl Property {
    pub const ALL: [Property; 7] = [
        Property::FrequencyRange,
        Property::Amplitude,
        Property::Timbre,
        Property::Duration,
        Property::AttackDecay,
        Property::Envelope,
        Property::SpectralContent,
    ];

    fn keywords(self) -> &'static [&'static str] {
        match self {
            Property::FrequencyRange => &["hz", "khz", "pitch", "frequency", "fundamental"],
            Property::Amplitude => &["amplitude", "loud", "soft", "quiet", "energy level", "intensity"],
            Property::Timbre => &["timbre", "tone quality"],
            Property::Duration => &["duration", "second", "ms", "lasting"],
            Property::AttackDecay => &["attack", "decay", "onset", "release"],
            Property::Envelope => &["envelope"],
            Property::SpectralContent => &["spectral", "spectrum", "spectrogram", "harmonic", "overtone", "partial", "broadband", "sideband"],
        }
    }

    /// Whether `text` mentions this property (whole-word keyword match).
    pub fn mentioned_in(self, text: &str) -> bool {
        let w = words(text);
        let joined = format!(" {} ", w.join(" "));
        self.keywords().iter().any(|k| {
            joined.contains(&format!(" {k} ")) || w.iter().any(|word| word.starts_with(k) && k.len() > 3)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeCard {
    pub source_phrase: String,
    /// First clause of the description mentioning each property.
    pub properties: BTreeMap<Property, String>,
    pub full_text: String,
    pub token_budget: usize,
    pub truncated: bool,
}

impl KnowledgeCard {
    pub fn from_text(source_phrase: &str, text: &str, token_budget: usize) -> Self {
        let (full_text, truncated) = truncate_to_budget(text, token_budget);
        let clauses: Vec<&str> = full_text.split([',', ';']).map(str::trim).collect();
        let properties = Property::ALL
            .iter()
            .filter_map(|&p| {
                clauses
                    .iter()
                    .find(|c| p.mentioned_in(c))
                    .map(|c| (p, c.trim_start_matches("and ").to_string()))
            })
            .collect();
        Self {
            source_phrase: source_phrase.to_string(),
            properties,
            full_text,
            token_budget,
            truncated,
        }
    }

    pub fn token_count(&self) -> usize {
        self.full_text.split_whitespace().count()
    }

    pub fn categories_mentioned(&self) -> usize {
        Property::ALL.iter().filter(|p| p.mentioned_in(&self.full_text)).count()
    }
}

/// Cuts `text` to at most `budget` whitespace tokens, at the last sentence
/// end that fits, or at the token limit when even one sentence is too long.
pub fn truncate_to_budget(text: &str, budget: usize) -> (String, bool) {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.len() <= budget {
        return (tokens.join(" "), false);
    }
    let head = &tokens[..budget];
    let cut = head
        .iter()
        .rposition(|t| t.ends_with(['.', '!', '?']))
        .map(|i| i + 1)
        .unwrap_or(budget);
    (head[..cut].join(" "), true)
}

pub fn parse_knowledge(
    phrase: &str,
    prompt: &FewShotPrompt,
    backend: &dyn LlmBackend,
    token_budget: usize,
) -> Result<KnowledgeCard> {
    if phrase.trim().is_empty() {
        return Err(Error::invalid("source phrase is empty"));
    }
    if prompt.task != Task::KnowledgeParse {
        return Err(Error::invalid("knowledge parsing needs a knowledge-parse prompt"));
    }
    if token_budget == 0 {
        return Err(Error::invalid("token budget must be positive"));
    }
    let raw = backend.complete(&prompt.clone().with_query(phrase.trim()))?;
    let text = raw.split_whitespace().collect::<Vec<_>>().join(" ");
    if text.is_empty() {
        return Err(Error::Parse { raw });
    }
    Ok(KnowledgeCard::from_text(phrase.trim(), &text, token_budget))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeEntry {
    pub phrase: String,
    pub full_text: String,
}

/// Per-clip record of the text stages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedManifest {
    pub caption: String,
    pub sources: Vec<String>,
    pub knowledge: Vec<KnowledgeEntry>,
}
