//! Deterministic synthetic source classes with parameter-derived
//! descriptions.
//!
//! Each class is a small signal generator (tone, harmonic tone, chirp,
//! band-limited noise, amplitude-modulated burst) plus a description
//! template whose slots are filled from the generator parameters, so the
//! "knowledge" text is always faithful to the audio.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dsp::wav::{read_wav, write_wav, WavFormat};
use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::mixer::SourceClip;

pub const INDEX_SCHEMA_VERSION: u32 = 1;
/// Peak amplitude never exceeded by a generated clip.
pub const CLIP_PEAK_MAX: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    PureTone,
    HarmonicTone,
    Chirp,
    NoiseBand,
    AmBurst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyClassSpec {
    pub class_id: String,
    /// Short class phrase without article, e.g. "low steady tone".
    pub phrase: String,
    pub generator: Generator,
    /// Frequency range in Hz: tone frequency, harmonic fundamental, chirp
    /// sweep, noise band, or burst carrier depending on the generator.
    pub freq_low_hz: f64,
    pub freq_high_hz: f64,
    pub harmonics: u32,
    pub am_rate_hz: f64,
    pub attack_ms: f64,
    pub decay_ms: f64,
    /// Template with `{lo}`, `{hi}`, `{top}`, `{harmonics}`, `{am_rate}`,
    /// `{bandwidth}`, `{duration}`, `{attack}`, `{decay}` slots.
    pub descriptor_template: String,
}

/// Formats a parameter the way it appears in descriptions.
pub fn format_number(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{}", v as i64)
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

impl ToyClassSpec {
    /// Highest frequency with significant energy.
    pub fn top_frequency(&self) -> f64 {
        match self.generator {
            Generator::HarmonicTone => self.freq_high_hz * self.harmonics.max(1) as f64,
            _ => self.freq_high_hz,
        }
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.freq_high_hz - self.freq_low_hz
    }

    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let nyquist = sample_rate as f64 / 2.0;
        if !(self.freq_low_hz > 0.0 && self.freq_low_hz <= self.freq_high_hz) {
            return Err(Error::invalid(format!(
                "class {}: frequency range [{}, {}] is invalid",
                self.class_id, self.freq_low_hz, self.freq_high_hz
            )));
        }
        if self.top_frequency() >= nyquist {
            return Err(Error::invalid(format!(
                "class {}: content up to {} Hz exceeds Nyquist {} Hz",
                self.class_id,
                self.top_frequency(),
                nyquist
            )));
        }
        if self.generator == Generator::HarmonicTone && self.harmonics == 0 {
            return Err(Error::invalid("harmonic tone needs at least one harmonic"));
        }
        if self.generator == Generator::AmBurst && self.am_rate_hz <= 0.0 {
            return Err(Error::invalid("burst class needs a positive modulation rate"));
        }
        Ok(())
    }

    fn slots(&self, duration: f64) -> Vec<(&'static str, String)> {
        vec![
            ("{lo}", format_number(self.freq_low_hz)),
            ("{hi}", format_number(self.freq_high_hz)),
            ("{top}", format_number(self.top_frequency())),
            ("{harmonics}", self.harmonics.to_string()),
            ("{am_rate}", format_number(self.am_rate_hz)),
            ("{bandwidth}", format_number(self.bandwidth_hz())),
            ("{duration}", format_number(duration)),
            ("{attack}", format_number(self.attack_ms)),
            ("{decay}", format_number(self.decay_ms)),
        ]
    }

    /// Numbers a rendered description may legitimately contain.
    pub fn parameter_values(&self, duration: f64) -> Vec<f64> {
        vec![
            self.freq_low_hz,
            self.freq_high_hz,
            self.top_frequency(),
            self.harmonics as f64,
            self.am_rate_hz,
            self.bandwidth_hz(),
            duration,
            self.attack_ms,
            self.decay_ms,
        ]
    }

    pub fn render_descriptor(&self, duration: f64) -> String {
        self.slots(duration)
            .into_iter()
            .fold(self.descriptor_template.clone(), |t, (slot, v)| t.replace(slot, &v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KnowledgeMode {
    ClassOnly,
    Enriched,
}

/// "a"/"an" followed by the phrase.
pub fn with_article(phrase: &str) -> String {
    let article = match phrase.chars().next().map(|c| c.to_ascii_lowercase()) {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    };
    format!("{article} {phrase}")
}

/// Prompt text for a class: the bare class phrase, or the full
/// parameter-derived description.
pub fn knowledge_text_for_class(spec: &ToyClassSpec, mode: KnowledgeMode, duration: f64) -> String {
    match mode {
        KnowledgeMode::ClassOnly => with_article(&spec.phrase),
        KnowledgeMode::Enriched => spec.render_descriptor(duration),
    }
}

fn class(
    id: &str,
    phrase: &str,
    generator: Generator,
    range: (f64, f64),
    harmonics: u32,
    am_rate_hz: f64,
    template: &str,
) -> ToyClassSpec {
    ToyClassSpec {
        class_id: id.into(),
        phrase: phrase.into(),
        generator,
        freq_low_hz: range.0,
        freq_high_hz: range.1,
        harmonics,
        am_rate_hz,
        attack_ms: 20.0,
        decay_ms: 50.0,
        descriptor_template: template.into(),
    }
}

/// Eight classes at 16 kHz: mostly disjoint bands, with two overlapping
/// pairs (tone_low/hum, chirp_up/noise_mid).
pub fn default_classes() -> Vec<ToyClassSpec> {
    use Generator::*;
    vec![
        class(
            "tone_low",
            "low steady tone",
            PureTone,
            (200.0, 400.0),
            1,
            0.0,
            "a steady pure tone between {lo} and {hi} Hz, with a constant moderate amplitude, \
             a clean sinusoidal timbre, a duration of {duration} s, a {attack} ms attack and \
             {decay} ms decay, a flat dynamic envelope, and a single spectral peak without overtones",
        ),
        class(
            "tone_high",
            "high steady tone",
            PureTone,
            (2000.0, 3000.0),
            1,
            0.0,
            "a steady high-pitched pure tone between {lo} and {hi} Hz, with a constant moderate \
             amplitude, a thin piercing timbre, a duration of {duration} s, a {attack} ms attack \
             and {decay} ms decay, a flat dynamic envelope, and a single spectral peak without overtones",
        ),
        class(
            "hum",
            "buzzing harmonic hum",
            HarmonicTone,
            (100.0, 150.0),
            6,
            0.0,
            "a buzzing low hum with a fundamental between {lo} and {hi} Hz and {harmonics} \
             harmonics reaching {top} Hz, a constant amplitude, a rich reedy timbre, a duration \
             of {duration} s, a {attack} ms attack and {decay} ms decay, a flat envelope, and a \
             spectrum of evenly spaced overtones that fall off with frequency",
        ),
        class(
            "chirp_up",
            "rising chirp",
            Chirp,
            (500.0, 1500.0),
            1,
            0.0,
            "a rising chirp sweeping upward from {lo} to {hi} Hz, with a constant amplitude, a \
             smooth whistling timbre, a duration of {duration} s, a {attack} ms attack and \
             {decay} ms decay, a flat envelope, and a single narrow spectral peak that moves up in pitch",
        ),
        class(
            "noise_mid",
            "rushing mid-range noise",
            NoiseBand,
            (1000.0, 1800.0),
            1,
            0.0,
            "a rushing band of noise between {lo} and {hi} Hz with a bandwidth of {bandwidth} Hz, \
             a steady amplitude, a breathy airy timbre, a duration of {duration} s, a {attack} ms \
             attack and {decay} ms decay, a flat envelope, and a dense continuous spectrum without pitch",
        ),
        class(
            "noise_high",
            "high airy hiss",
            NoiseBand,
            (4000.0, 6000.0),
            1,
            0.0,
            "a bright hiss of noise between {lo} and {hi} Hz with a bandwidth of {bandwidth} Hz, \
             a soft steady amplitude, a sibilant timbre, a duration of {duration} s, a {attack} ms \
             attack and {decay} ms decay, a flat envelope, and a dense high-frequency spectrum without pitch",
        ),
        class(
            "beep",
            "pulsing beep",
            AmBurst,
            (3200.0, 3800.0),
            1,
            4.0,
            "a pulsing electronic beep with a carrier between {lo} and {hi} Hz repeating {am_rate} \
             times per second, a loud on-off amplitude pattern, a pure synthetic timbre, a duration \
             of {duration} s, a {attack} ms attack and {decay} ms decay, a gated dynamic envelope, \
             and a narrow spectral peak with modulation sidebands",
        ),
        class(
            "whistle",
            "shrill whistle",
            PureTone,
            (6500.0, 7500.0),
            1,
            0.0,
            "a shrill whistle between {lo} and {hi} Hz, with a constant loud amplitude, a very \
             thin piercing timbre, a duration of {duration} s, a {attack} ms attack and {decay} ms \
             decay, a flat dynamic envelope, and a single very high spectral peak",
        ),
    ]
}

/// Per-clip parameters actually used for synthesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipParams {
    /// Tone frequency / fundamental / burst carrier, or chirp start.
    pub freq_hz: f64,
    /// Chirp end frequency; equals `freq_hz` for other generators.
    pub freq_end_hz: f64,
    pub peak: f64,
    pub phase: f64,
}

/// Stable 64-bit mixing of a seed with a stream index.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn band_noise(len: usize, sr: u32, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut buf: Vec<Complex64> = (0..len)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    for (k, b) in buf.iter_mut().enumerate() {
        let f = k.min(len - k) as f64 * sr as f64 / len as f64;
        if f < lo || f > hi {
            *b = Complex64::default();
        }
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    buf.iter().map(|c| c.re).collect()
}

fn envelope(n: usize, len: usize, sr: u32, attack_ms: f64, decay_ms: f64) -> f64 {
    let t = n as f64 / sr as f64 * 1000.0;
    let remaining = (len - n) as f64 / sr as f64 * 1000.0;
    let a = if attack_ms > 0.0 { (t / attack_ms).min(1.0) } else { 1.0 };
    let d = if decay_ms > 0.0 { (remaining / decay_ms).min(1.0) } else { 1.0 };
    a * d
}

/// Synthesizes one clip of `duration` seconds; identical `(spec, seed)`
/// always yields identical samples.
pub fn generate_clip(
    spec: &ToyClassSpec,
    duration: f64,
    sample_rate: u32,
    seed: u64,
    clip_id: &str,
) -> Result<(SourceClip, ClipParams)> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::invalid(format!("clip duration {duration} must be positive")));
    }
    spec.validate(sample_rate)?;
    let len = (duration * sample_rate as f64).round() as usize;
    if len == 0 {
        return Err(Error::invalid("clip duration rounds to zero samples"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sr = sample_rate as f64;
    let (lo, hi) = (spec.freq_low_hz, spec.freq_high_hz);
    let phase = rng.gen_range(0.0..2.0 * PI);
    let peak = rng.gen_range(0.5..=CLIP_PEAK_MAX);
    let freq = rng.gen_range(lo..=hi);

    let (raw, params): (Vec<f64>, ClipParams) = match spec.generator {
        Generator::PureTone => (
            (0..len).map(|n| (2.0 * PI * freq * n as f64 / sr + phase).sin()).collect(),
            ClipParams { freq_hz: freq, freq_end_hz: freq, peak, phase },
        ),
        Generator::HarmonicTone => {
            let h = spec.harmonics as usize;
            (
                (0..len)
                    .map(|n| {
                        (1..=h)
                            .map(|k| {
                                let kf = k as f64;
                                (2.0 * PI * kf * freq * n as f64 / sr + kf * phase).sin() / kf
                            })
                            .sum()
                    })
                    .collect(),
                ClipParams { freq_hz: freq, freq_end_hz: freq, peak, phase },
            )
        }
        Generator::Chirp => {
            let span = hi - lo;
            let start = rng.gen_range(lo..=lo + span / 4.0);
            let end = rng.gen_range(hi - span / 4.0..=hi);
            let total = len as f64 / sr;
            (
                (0..len)
                    .map(|n| {
                        let t = n as f64 / sr;
                        let inst = 2.0 * PI * (start * t + (end - start) * t * t / (2.0 * total));
                        (inst + phase).sin()
                    })
                    .collect(),
                ClipParams { freq_hz: start, freq_end_hz: end, peak, phase },
            )
        }
        Generator::NoiseBand => (
            band_noise(len, sample_rate, lo, hi, &mut rng),
            ClipParams { freq_hz: lo, freq_end_hz: hi, peak, phase },
        ),
        Generator::AmBurst => {
            let rate = spec.am_rate_hz;
            (
                (0..len)
                    .map(|n| {
                        let t = n as f64 / sr;
                        // Raised-cosine gate: on for half of each period.
                        let cycle = (t * rate + phase / (2.0 * PI)).fract();
                        let gate = if cycle < 0.5 { (PI * cycle * 2.0).sin().powf(0.5) } else { 0.0 };
                        gate * (2.0 * PI * freq * t).sin()
                    })
                    .collect(),
                ClipParams { freq_hz: freq, freq_end_hz: freq, peak, phase },
            )
        }
    };

    let shaped: Vec<f64> = raw
        .iter()
        .enumerate()
        .map(|(n, v)| v * envelope(n, len, sample_rate, spec.attack_ms, spec.decay_ms))
        .collect();
    let max = shaped.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gain = if max > 0.0 { peak / max } else { 0.0 };
    let samples = shaped.into_iter().map(|v| v * gain).collect();
    let clip = SourceClip {
        audio: Waveform::new(samples, sample_rate)?,
        class_label: spec.class_id.clone(),
        clip_id: clip_id.to_string(),
        descriptor: Some(spec.render_descriptor(duration)),
    };
    Ok((clip, params))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub clip_id: String,
    pub class_id: String,
    /// Relative to the corpus root.
    pub path: String,
    pub seed: u64,
    pub params: ClipParams,
    pub descriptor: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusIndex {
    pub schema_version: u32,
    pub seed: u64,
    pub sample_rate: u32,
    pub clip_seconds: f64,
    pub clips_per_class: usize,
    pub classes: Vec<ToyClassSpec>,
    pub clips: Vec<ClipRecord>,
}

impl CorpusIndex {
    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("index serializes");
        hex::encode(Sha256::digest(json))
    }
}

/// Corpus generation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub sample_rate: u32,
    pub clip_seconds: f64,
    pub clips_per_class: usize,
    pub seed: u64,
}

impl Default for CorpusConfig {
    /// One-second clips at 16 kHz.
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            clip_seconds: 1.0,
            clips_per_class: 10,
            seed: 0,
        }
    }
}

impl CorpusConfig {
    /// Ten-second clips, the full-length setting.
    pub fn full_length() -> Self {
        Self {
            clip_seconds: 10.0,
            ..Self::default()
        }
    }
}

/// An in-memory corpus: class specs plus every clip, grouped by class.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub index: CorpusIndex,
    pub clips: BTreeMap<String, Vec<SourceClip>>,
}

impl Corpus {
    pub fn generate(classes: &[ToyClassSpec], cfg: &CorpusConfig) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for c in classes {
            if !seen.insert(c.class_id.as_str()) {
                return Err(Error::invalid(format!("duplicate class id {}", c.class_id)));
            }
            c.validate(cfg.sample_rate)?;
        }
        let mut records = Vec::new();
        let mut clips = BTreeMap::new();
        for (ci, spec) in classes.iter().enumerate() {
            let mut group = Vec::new();
            for k in 0..cfg.clips_per_class {
                let seed = derive_seed(cfg.seed, (ci as u64) << 32 | k as u64);
                let clip_id = format!("{}_{:04}", spec.class_id, k);
                let (clip, params) =
                    generate_clip(spec, cfg.clip_seconds, cfg.sample_rate, seed, &clip_id)?;
                records.push(ClipRecord {
                    path: format!("{}/{}.wav", spec.class_id, clip_id),
                    clip_id,
                    class_id: spec.class_id.clone(),
                    seed,
                    params,
                    descriptor: clip.descriptor.clone().unwrap_or_default(),
                });
                group.push(clip);
            }
            clips.insert(spec.class_id.clone(), group);
        }
        Ok(Self {
            index: CorpusIndex {
                schema_version: INDEX_SCHEMA_VERSION,
                seed: cfg.seed,
                sample_rate: cfg.sample_rate,
                clip_seconds: cfg.clip_seconds,
                clips_per_class: cfg.clips_per_class,
                classes: classes.to_vec(),
                clips: records,
            },
            clips,
        })
    }

    pub fn class(&self, id: &str) -> Option<&ToyClassSpec> {
        self.index.classes.iter().find(|c| c.class_id == id)
    }

    pub fn class_ids(&self) -> Vec<String> {
        self.index.classes.iter().map(|c| c.class_id.clone()).collect()
    }

    pub fn clips_of(&self, id: &str) -> &[SourceClip] {
        self.clips.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Prompt text for a class in the given mode.
    pub fn prompt_for(&self, id: &str, mode: KnowledgeMode) -> Option<String> {
        self.class(id)
            .map(|c| knowledge_text_for_class(c, mode, self.index.clip_seconds))
    }

    /// Writes `<root>/<class_id>/<clip_id>.wav`, `<root>/index.json`, and
    /// per-class descriptions under `<root>/descriptors/`.
    pub fn write(&self, root: &Path) -> Result<PathBuf> {
        let mk = |p: &Path| std::fs::create_dir_all(p).map_err(|e| Error::io(p, e));
        mk(&root.join("descriptors"))?;
        for rec in &self.index.clips {
            let clip = self
                .clips_of(&rec.class_id)
                .iter()
                .find(|c| c.clip_id == rec.clip_id)
                .expect("record has a clip");
            let path = root.join(&rec.path);
            mk(path.parent().expect("clip path has a parent"))?;
            write_wav(&path, &clip.audio, WavFormat::Float32)?;
        }
        for c in &self.index.classes {
            for (mode, suffix) in [(KnowledgeMode::Enriched, "enriched"), (KnowledgeMode::ClassOnly, "class")] {
                let path = root.join("descriptors").join(format!("{}.{suffix}.txt", c.class_id));
                let text = knowledge_text_for_class(c, mode, self.index.clip_seconds);
                std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
            }
        }
        let index_path = root.join("index.json");
        let json = serde_json::to_string_pretty(&self.index)?;
        std::fs::write(&index_path, json).map_err(|e| Error::io(&index_path, e))?;
        Ok(index_path)
    }

    /// Loads a corpus written by [`Corpus::write`].
    pub fn load(root: &Path) -> Result<Self> {
        let index_path = root.join("index.json");
        let text = std::fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
        let index: CorpusIndex = serde_json::from_str(&text)?;
        let mut clips: BTreeMap<String, Vec<SourceClip>> = BTreeMap::new();
        for c in &index.classes {
            clips.entry(c.class_id.clone()).or_default();
        }
        for rec in &index.clips {
            let audio = read_wav(root.join(&rec.path), Some(index.sample_rate))?;
            clips.entry(rec.class_id.clone()).or_default().push(SourceClip {
                audio,
                class_label: rec.class_id.clone(),
                clip_id: rec.clip_id.clone(),
                descriptor: Some(rec.descriptor.clone()),
            });
        }
        Ok(Self { index, clips })
    }
}

/// Generates a corpus and writes it under `root`.
pub fn generate_corpus(classes: &[ToyClassSpec], cfg: &CorpusConfig, root: &Path) -> Result<Corpus> {
    let corpus = Corpus::generate(classes, cfg)?;
    corpus.write(root)?;
    Ok(corpus)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seen: Vec<String>,
    pub unseen: Vec<String>,
    pub rng_seed: u64,
}

/// Seeded half/half class partition (the extra class of an odd count goes
/// to `unseen`).
pub fn split_seen_unseen(class_ids: &[String], seed: u64) -> Result<SplitSpec> {
    if class_ids.len() < 2 {
        return Err(Error::invalid("a split needs at least two classes"));
    }
    let mut ids = class_ids.to_vec();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let unseen = ids.split_off(class_ids.len() / 2);
    let mut seen = ids;
    seen.sort();
    let mut unseen = unseen;
    unseen.sort();
    Ok(SplitSpec {
        seen,
        unseen,
        rng_seed: seed,
    })
}
