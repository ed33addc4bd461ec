#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use textsep::corpus::{default_classes, Corpus, CorpusConfig};
use textsep::dsp::wav::{write_wav, WavFormat};
use textsep::dsp::Waveform;
use textsep::separator::{Checkpoint, SeparatorConfig, SeparatorModel};
use textsep::text::CaptionRegistry;

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_textsep")
}

pub fn textsep(args: &[&str], cwd: &Path) -> Output {
    Command::new(bin()).args(args).current_dir(cwd).env("RUST_LOG", "warn").output().expect("binary runs")
}

pub fn schema(name: &str) -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(name);
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Schema violations of `doc` as strings; empty when valid.
pub fn violations(schema_name: &str, doc: &Value) -> Vec<String> {
    let s = schema(schema_name);
    let compiled = jsonschema::JSONSchema::compile(&s).expect("schema compiles");
    let result = compiled.validate(doc);
    match result {
        Ok(()) => Vec::new(),
        Err(errs) => errs.map(|e| format!("{}: {}", e.instance_path, e)).collect(),
    }
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

pub fn small_corpus(clips_per_class: usize) -> Corpus {
    Corpus::generate(&default_classes(), &CorpusConfig { clips_per_class, ..CorpusConfig::default() }).unwrap()
}

/// Untrained small-preset checkpoint.
pub fn untrained_checkpoint(dir: &Path) -> PathBuf {
    let path = dir.join("untrained.ckpt");
    Checkpoint::from_model(SeparatorModel::new(SeparatorConfig::small()).unwrap()).save(&path).unwrap();
    path
}

/// Sum of the first clip of each class, written to `<dir>/<stem>.wav` and
/// registered under the classes' phrases in `<dir>/captions.json`.
pub fn toy_mixture(corpus: &Corpus, classes: &[&str], dir: &Path, stem: &str) -> (PathBuf, PathBuf) {
    let clips: Vec<&Waveform> = classes.iter().map(|c| &corpus.clips_of(c)[0].audio).collect();
    let mix = Waveform::sum(&clips).unwrap().scaled(0.5);
    let wav = dir.join(format!("{stem}.wav"));
    write_wav(&wav, &mix, WavFormat::Float32).unwrap();
    let reg_path = dir.join("captions.json");
    let mut reg = if reg_path.exists() { CaptionRegistry::load(&reg_path).unwrap() } else { CaptionRegistry::default() };
    let phrases = classes.iter().map(|c| corpus.class(c).unwrap().phrase.clone()).collect();
    let reread = textsep::dsp::wav::read_wav(&wav, None).unwrap();
    reg.register(&reread, phrases);
    reg.save(&reg_path).unwrap();
    (wav, reg_path)
}
