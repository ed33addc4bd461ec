use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use textsep::corpus::{Corpus, KnowledgeMode};
use textsep::dsp::StftConfig;
use textsep::mixer::{GainPolicy, MixtureManifest};
use textsep::separator::{ClipPart, ClipPool};
use textsep::text::CaptionRegistry;

use crate::config::SCHEMA_VERSION;
use crate::error::{io_err, CliError};

/// Index of a generated mixture set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixgenIndex {
    pub schema_version: u32,
    pub seed: u64,
    pub count: usize,
    pub knowledge_mode: KnowledgeMode,
    pub part: String,
    /// `(manifest file, SHA-256 of its contents)` per tree.
    pub manifests: Vec<(String, String)>,
    pub registry: String,
}

#[derive(Debug, Clone)]
pub struct MixgenOptions {
    pub count: usize,
    pub seed: u64,
    pub knowledge_mode: KnowledgeMode,
    /// Draw from the held-out clips instead of the training clips.
    pub held_out: bool,
    pub gain: GainPolicy,
}

/// Writes `count` mixture trees under `out` as `mix_NNNN.*`, a caption
/// registry naming the sources of every root and mid mixture, and
/// `mixtures.json`.
pub fn run_mixgen(corpus: &Corpus, opts: &MixgenOptions, out: &Path) -> Result<(PathBuf, MixgenIndex), CliError> {
    let ids = corpus.class_ids();
    if ids.len() < 4 {
        return Err(CliError::Other(format!("invalid input: corpus has {} classes, mixtures need 4", ids.len())));
    }
    let part = if opts.held_out { ClipPart::Test } else { ClipPart::Train };
    let pool = ClipPool::from_corpus(corpus, &ids, opts.knowledge_mode, part)?;
    let stft = StftConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut registry = CaptionRegistry::default();
    let mut manifests = Vec::with_capacity(opts.count);
    std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    for i in 0..opts.count {
        let tree = pool.sample_tree(&opts.gain, &stft, &mut rng)?;
        let phrases: Vec<String> = tree
            .leaves
            .iter()
            .map(|l| corpus.class(&l.class_label).map(|c| c.phrase.clone()).unwrap_or_else(|| l.class_label.clone()))
            .collect();
        registry.register(&tree.root, phrases.clone());
        registry.register(&tree.mid[0], phrases[..2].to_vec());
        registry.register(&tree.mid[1], phrases[2..].to_vec());
        let (path, _) = MixtureManifest::write(&tree, out, &format!("mix_{i:04}"))?;
        let bytes = std::fs::read(&path).map_err(|e| io_err(&path, e))?;
        let name = path.file_name().expect("manifest file").to_string_lossy().into_owned();
        manifests.push((name, hex::encode(Sha256::digest(&bytes))));
    }
    let registry_path = out.join("captions.json");
    registry.save(&registry_path)?;
    let index = MixgenIndex {
        schema_version: SCHEMA_VERSION,
        seed: opts.seed,
        count: opts.count,
        knowledge_mode: opts.knowledge_mode,
        part: if opts.held_out { "test" } else { "train" }.into(),
        manifests,
        registry: "captions.json".into(),
    };
    let path = out.join("mixtures.json");
    let json = serde_json::to_string_pretty(&index).map_err(|e| CliError::Other(e.to_string()))?;
    std::fs::write(&path, json + "\n").map_err(|e| io_err(&path, e))?;
    Ok((path, index))
}
