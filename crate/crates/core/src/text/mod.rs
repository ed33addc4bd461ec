//! Textual inversion: captioning, source parsing and knowledge parsing.

pub mod backend;
pub mod knowledge;
pub mod lexicon;
pub mod parse;
pub mod prompt;
pub mod rules;
pub mod similarity;

pub use backend::{
    fingerprint, render_caption, CaptionRegistry, Captioner, CaptionerKind, CaptionerSpec, HttpCaptioner, HttpChat,
    LlmBackend, LlmBackendSpec, LlmKind, MockCaptioner, MockLlm, RetryPolicy, TokenBucket,
};
pub use parse::{
    caption_audio, collapse_duplicates, parse_knowledge, parse_sources, Caption, KnowledgeCard, KnowledgeEntry,
    ParsedManifest, ParsedSourceList, Property, DEFAULT_TOKEN_BUDGET,
};
pub use prompt::{build_fewshot_prompt, Exemplar, ExemplarSet, FewShotPrompt, Task};
pub use similarity::{cosine_similarity, match_sources_to_labels, MatchResult, TextEmbedderSpec};
