use serde::Deserialize;
use textsep::corpus::{default_classes, knowledge_text_for_class, KnowledgeMode};
use textsep::text::{
    build_fewshot_prompt, caption_audio, parse_knowledge, parse_sources, Caption, CaptionRegistry, MockCaptioner,
    MockLlm, Task, DEFAULT_TOKEN_BUDGET,
};
use textsep::dsp::Waveform;

#[derive(Deserialize)]
struct Golden {
    caption: String,
    sources: Vec<String>,
}

fn goldens() -> Vec<Golden> {
    serde_json::from_str(include_str!("fixtures/source_parse_goldens.json")).unwrap()
}

#[test]
fn mock_parser_reproduces_goldens() {
    let prompt = build_fewshot_prompt(Task::SourceParse, 5).unwrap();
    let llm = MockLlm::default();
    for g in goldens() {
        let caption = Caption { text: g.caption.clone(), source_backend: "fixture".into() };
        let parsed = parse_sources(&caption, &prompt, &llm).unwrap();
        assert_eq!(parsed.sources, g.sources, "caption: {}", g.caption);
    }
}

#[test]
fn parsing_is_idempotent_on_its_output() {
    let prompt = build_fewshot_prompt(Task::SourceParse, 5).unwrap();
    let llm = MockLlm::default();
    for g in goldens() {
        let text = g.sources.iter().map(|s| format!("{s}.")).collect::<Vec<_>>().join(" ");
        let caption = Caption { text, source_backend: "fixture".into() };
        assert_eq!(parse_sources(&caption, &prompt, &llm).unwrap().sources, g.sources);
    }
}

#[test]
fn mocks_are_deterministic() {
    let prompt = build_fewshot_prompt(Task::KnowledgeParse, 5).unwrap();
    let a = parse_knowledge("Dog barking", &prompt, &MockLlm::default(), DEFAULT_TOKEN_BUDGET).unwrap();
    let b = parse_knowledge("Dog barking", &prompt, &MockLlm::default(), DEFAULT_TOKEN_BUDGET).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn toy_mixture_caption_to_cards() {
    let x = Waveform::new((0..160).map(|n| (n as f64 * 0.1).sin() * 0.5).collect(), 16_000).unwrap();
    let mut registry = CaptionRegistry::default();
    registry.register(&x, vec!["low steady tone".into(), "rising chirp".into()]);
    let caption = caption_audio(&x, &MockCaptioner::new(registry)).unwrap();
    assert_eq!(caption.text, "A low steady tone and a rising chirp.");

    let llm = MockLlm::default();
    let sources = parse_sources(&caption, &build_fewshot_prompt(Task::SourceParse, 5).unwrap(), &llm).unwrap();
    let kp = build_fewshot_prompt(Task::KnowledgeParse, 5).unwrap();
    let classes = default_classes();
    for (phrase, class) in sources.sources.iter().zip(["tone_low", "chirp_up"]) {
        let card = parse_knowledge(phrase, &kp, &llm, DEFAULT_TOKEN_BUDGET).unwrap();
        let spec = classes.iter().find(|c| c.class_id == class).unwrap();
        assert_eq!(card.full_text, knowledge_text_for_class(spec, KnowledgeMode::Enriched, 1.0));
        assert!(card.token_count() <= DEFAULT_TOKEN_BUDGET);
    }
}
