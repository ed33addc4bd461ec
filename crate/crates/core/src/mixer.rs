//! Synthetic mixtures for mix-and-separate training.
//!
//! A [`MixtureTree`] mixes four gain-scaled leaves pairwise into two
//! mid-level mixtures and sums those into the root. Supervision targets are
//! the magnitude spectrograms of every leaf and mid node on the root's frame
//! grid.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::wav::{read_wav, write_wav, WavFormat};
use crate::dsp::{stft, ComplexSpectrogram, MagnitudeSpectrogram, StftConfig, Waveform};
use crate::error::{Error, Result};

/// Peak level the root mixture is scaled to when it would clip.
pub const PEAK_TARGET: f64 = 0.99;

/// One single-source clip plus its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceClip {
    pub audio: Waveform,
    pub class_label: String,
    pub clip_id: String,
    /// Knowledge text used as this clip's prompt; falls back to the label.
    pub descriptor: Option<String>,
}

impl SourceClip {
    pub fn prompt(&self) -> &str {
        self.descriptor.as_deref().unwrap_or(&self.class_label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainPolicy {
    pub gain_low: f64,
    pub gain_high: f64,
    pub normalize_peak: bool,
    pub rng_seed: u64,
}

impl Default for GainPolicy {
    fn default() -> Self {
        Self {
            gain_low: 0.25,
            gain_high: 1.0,
            normalize_peak: true,
            rng_seed: 0,
        }
    }
}

impl GainPolicy {
    pub fn fixed(gain: f64) -> Self {
        Self {
            gain_low: gain,
            gain_high: gain,
            normalize_peak: false,
            rng_seed: 0,
        }
    }

    pub fn with_seed(self, rng_seed: u64) -> Self {
        Self { rng_seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gain_low > 0.0 && self.gain_low <= self.gain_high && self.gain_high.is_finite()) {
            return Err(Error::invalid(format!(
                "gain range [{}, {}] must satisfy 0 < low <= high",
                self.gain_low, self.gain_high
            )));
        }
        Ok(())
    }

    fn draw(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(self.gain_low..=self.gain_high)).collect()
    }
}

fn check_compatible(sources: &[&Waveform]) -> Result<()> {
    let first = sources[0];
    for s in &sources[1..] {
        if s.len() != first.len() {
            return Err(Error::invalid(format!(
                "source lengths differ: {} vs {}",
                first.len(),
                s.len()
            )));
        }
        if s.sample_rate() != first.sample_rate() {
            return Err(Error::invalid(format!(
                "source sample rates differ: {} vs {}",
                first.sample_rate(),
                s.sample_rate()
            )));
        }
    }
    Ok(())
}

fn weighted_sum(sources: &[&Waveform], gains: &[f64]) -> Waveform {
    let mut out = vec![0.0; sources[0].len()];
    for (s, g) in sources.iter().zip(gains) {
        for (o, v) in out.iter_mut().zip(s.samples()) {
            *o += g * v;
        }
    }
    Waveform::new(out, sources[0].sample_rate()).expect("finite weighted sum")
}

/// Draws a gain per source from `rng`, mixes, and (optionally) scales all
/// gains down uniformly so the mixture peaks at [`PEAK_TARGET`].
pub fn rescale_and_mix_with_rng(
    sources: &[Waveform],
    policy: &GainPolicy,
    rng: &mut ChaCha8Rng,
) -> Result<(Waveform, Vec<f64>)> {
    policy.validate()?;
    if sources.len() < 2 {
        return Err(Error::invalid("mixing needs at least two sources"));
    }
    let refs: Vec<&Waveform> = sources.iter().collect();
    check_compatible(&refs)?;
    let mut gains = policy.draw(sources.len(), rng);
    let mut mix = weighted_sum(&refs, &gains);
    let peak = mix.peak();
    if policy.normalize_peak && peak > 1.0 {
        let k = PEAK_TARGET / peak;
        gains.iter_mut().for_each(|g| *g *= k);
        mix = weighted_sum(&refs, &gains);
    }
    Ok((mix, gains))
}

/// [`rescale_and_mix_with_rng`] seeded from the policy.
pub fn rescale_and_mix(sources: &[Waveform], policy: &GainPolicy) -> Result<(Waveform, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(policy.rng_seed);
    rescale_and_mix_with_rng(sources, policy, &mut rng)
}

/// Prompt slots of a mixture tree: four single sources, two pair mixtures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PromptNode {
    S1,
    S2,
    S3,
    S4,
    M1,
    M2,
}

impl PromptNode {
    pub const ALL: [PromptNode; 6] = [
        PromptNode::S1,
        PromptNode::S2,
        PromptNode::S3,
        PromptNode::S4,
        PromptNode::M1,
        PromptNode::M2,
    ];
    pub const SINGLES: [PromptNode; 4] = [PromptNode::S1, PromptNode::S2, PromptNode::S3, PromptNode::S4];

    pub fn is_single(self) -> bool {
        matches!(self, PromptNode::S1 | PromptNode::S2 | PromptNode::S3 | PromptNode::S4)
    }
}

impl fmt::Display for PromptNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Joins two leaf prompts into the prompt for their pair mixture.
pub fn pair_prompt(a: &str, b: &str) -> String {
    format!("{a} and {b}")
}

#[derive(Debug, Clone)]
pub struct MixtureTree {
    pub leaves: [SourceClip; 4],
    pub gains: [f64; 4],
    pub mid: [Waveform; 2],
    pub root: Waveform,
    pub root_spec: ComplexSpectrogram,
    pub prompts: BTreeMap<PromptNode, String>,
    pub targets: BTreeMap<PromptNode, MagnitudeSpectrogram>,
    pub seed: u64,
}

impl MixtureTree {
    /// `g_i · x_i` for leaf `i`.
    pub fn scaled_leaf(&self, i: usize) -> Waveform {
        self.leaves[i].audio.scaled(self.gains[i])
    }

    /// Reference waveform for each prompt node.
    pub fn node_audio(&self, node: PromptNode) -> Waveform {
        match node {
            PromptNode::S1 => self.scaled_leaf(0),
            PromptNode::S2 => self.scaled_leaf(1),
            PromptNode::S3 => self.scaled_leaf(2),
            PromptNode::S4 => self.scaled_leaf(3),
            PromptNode::M1 => self.mid[0].clone(),
            PromptNode::M2 => self.mid[1].clone(),
        }
    }
}

/// Mixes `x1..x4` into `y1 = Mix(x1, x2)`, `y2 = Mix(x3, x4)`,
/// `z = y1 + y2`, with targets on the root's STFT grid.
pub fn build_mixture_tree(
    clips: [SourceClip; 4],
    policy: &GainPolicy,
    stft_cfg: &StftConfig,
) -> Result<MixtureTree> {
    let mut rng = ChaCha8Rng::seed_from_u64(policy.rng_seed);
    build_mixture_tree_with_rng(clips, policy, stft_cfg, &mut rng, policy.rng_seed)
}

pub fn build_mixture_tree_with_rng(
    clips: [SourceClip; 4],
    policy: &GainPolicy,
    stft_cfg: &StftConfig,
    rng: &mut ChaCha8Rng,
    seed: u64,
) -> Result<MixtureTree> {
    policy.validate()?;
    let audio: Vec<&Waveform> = clips.iter().map(|c| &c.audio).collect();
    check_compatible(&audio)?;
    let mut gains = policy.draw(4, rng);
    let root = weighted_sum(&audio, &gains);
    let peak = root.peak();
    if policy.normalize_peak && peak > 1.0 {
        let k = PEAK_TARGET / peak;
        gains.iter_mut().for_each(|g| *g *= k);
    }
    let mid = [
        weighted_sum(&audio[0..2], &gains[0..2]),
        weighted_sum(&audio[2..4], &gains[2..4]),
    ];
    let root = Waveform::sum(&[&mid[0], &mid[1]])?;
    let root_spec = stft(&root, stft_cfg)?;

    let mut targets = BTreeMap::new();
    for (i, node) in PromptNode::SINGLES.iter().enumerate() {
        targets.insert(*node, stft(&audio[i].scaled(gains[i]), stft_cfg)?.magnitude());
    }
    targets.insert(PromptNode::M1, stft(&mid[0], stft_cfg)?.magnitude());
    targets.insert(PromptNode::M2, stft(&mid[1], stft_cfg)?.magnitude());

    let leaf_prompts: Vec<&str> = clips.iter().map(SourceClip::prompt).collect();
    let mut prompts = BTreeMap::new();
    for (i, node) in PromptNode::SINGLES.iter().enumerate() {
        prompts.insert(*node, leaf_prompts[i].to_string());
    }
    prompts.insert(PromptNode::M1, pair_prompt(leaf_prompts[0], leaf_prompts[1]));
    prompts.insert(PromptNode::M2, pair_prompt(leaf_prompts[2], leaf_prompts[3]));

    Ok(MixtureTree {
        leaves: clips,
        gains: [gains[0], gains[1], gains[2], gains[3]],
        mid,
        root,
        root_spec,
        prompts,
        targets,
        seed,
    })
}

/// On-disk record of a mixture tree; paths are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureManifest {
    pub root_wav: String,
    pub mid_wavs: [String; 2],
    pub leaf_wavs: [String; 4],
    pub leaf_classes: [String; 4],
    pub leaf_clip_ids: [String; 4],
    pub gains: [f64; 4],
    pub prompts: BTreeMap<PromptNode, String>,
    pub seed: u64,
}

impl MixtureManifest {
    /// Writes the tree's WAVs as `<stem>.root.wav`, `<stem>.mid<k>.wav`,
    /// `<stem>.leaf<k>.wav` (raw, unscaled leaves) and `<stem>.json`.
    pub fn write(tree: &MixtureTree, dir: &Path, stem: &str) -> Result<(PathBuf, Self)> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let name = |suffix: &str| format!("{stem}.{suffix}.wav");
        let manifest = Self {
            root_wav: name("root"),
            mid_wavs: [name("mid1"), name("mid2")],
            leaf_wavs: [name("leaf1"), name("leaf2"), name("leaf3"), name("leaf4")],
            leaf_classes: tree.leaves.clone().map(|l| l.class_label),
            leaf_clip_ids: tree.leaves.clone().map(|l| l.clip_id),
            gains: tree.gains,
            prompts: tree.prompts.clone(),
            seed: tree.seed,
        };
        write_wav(dir.join(&manifest.root_wav), &tree.root, WavFormat::Float32)?;
        for (k, m) in tree.mid.iter().enumerate() {
            write_wav(dir.join(&manifest.mid_wavs[k]), m, WavFormat::Float32)?;
        }
        for (k, l) in tree.leaves.iter().enumerate() {
            write_wav(dir.join(&manifest.leaf_wavs[k]), &l.audio, WavFormat::Float32)?;
        }
        let path = dir.join(format!("{stem}.json"));
        let json = serde_json::to_string_pretty(&manifest)?;
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        Ok((path, manifest))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Loads the gain-scaled leaves (`g_i · x_i`) relative to `dir`.
    pub fn scaled_leaves(&self, dir: &Path) -> Result<Vec<Waveform>> {
        self.leaf_wavs
            .iter()
            .zip(&self.gains)
            .map(|(p, g)| Ok(read_wav(dir.join(p), None)?.scaled(*g)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn random_wave(len: usize, seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Waveform::new((0..len).map(|_| rng.gen_range(-0.5..0.5)).collect(), 16_000).unwrap()
    }

    fn clip(w: Waveform, label: &str) -> SourceClip {
        SourceClip {
            audio: w,
            class_label: label.into(),
            clip_id: format!("{label}-0"),
            descriptor: None,
        }
    }

    fn four_clips(len: usize, seed: u64) -> [SourceClip; 4] {
        [0, 1, 2, 3].map(|i| clip(random_wave(len, seed + i), &format!("c{i}")))
    }

    #[test]
    fn fixed_gain_sum_of_sinusoids() {
        let a: Vec<f64> = (0..100).map(|n| (2.0 * PI * n as f64 / 25.0).sin()).collect();
        let b: Vec<f64> = (0..100).map(|n| (2.0 * PI * n as f64 / 10.0).sin()).collect();
        let (mix, gains) = rescale_and_mix(
            &[Waveform::new(a.clone(), 100).unwrap(), Waveform::new(b.clone(), 100).unwrap()],
            &GainPolicy::fixed(1.0),
        )
        .unwrap();
        assert_eq!(gains, vec![1.0, 1.0]);
        for (i, v) in mix.samples().iter().enumerate() {
            assert_eq!(*v, a[i] + b[i]);
        }
    }

    #[test]
    fn silent_source_leaves_other_scaled() {
        let x = random_wave(200, 1);
        let (mix, gains) =
            rescale_and_mix(&[Waveform::zeros(200, 16_000), x.clone()], &GainPolicy::default())
                .unwrap();
        for (m, v) in mix.samples().iter().zip(x.samples()) {
            assert!((m - gains[1] * v).abs() < 1e-15);
        }
    }

    #[test]
    fn weighted_sum_matches_brute_force() {
        let srcs: Vec<Waveform> = (0..4).map(|i| random_wave(500, 10 + i)).collect();
        let policy = GainPolicy { rng_seed: 77, ..GainPolicy::default() };
        let (mix, gains) = rescale_and_mix(&srcs, &policy).unwrap();
        for n in 0..500 {
            let want: f64 = (0..4).map(|i| gains[i] * srcs[i].samples()[n]).sum();
            assert!((mix.samples()[n] - want).abs() < 1e-12);
        }
        assert!(gains.iter().all(|g| (0.25..=1.0).contains(g)));
    }

    #[test]
    fn mix_rejects_mismatch() {
        let p = GainPolicy::default();
        assert!(rescale_and_mix(&[random_wave(10, 1)], &p).is_err());
        assert!(rescale_and_mix(&[random_wave(10, 1), random_wave(11, 2)], &p).is_err());
        let other_rate = Waveform::new(vec![0.0; 10], 8_000).unwrap();
        assert!(rescale_and_mix(&[random_wave(10, 1), other_rate], &p).is_err());
        let bad = GainPolicy { gain_low: 2.0, gain_high: 1.0, ..p };
        assert!(rescale_and_mix(&[random_wave(10, 1), random_wave(10, 2)], &bad).is_err());
    }

    #[test]
    fn identical_clips_normalize_to_target_peak() {
        let x: Vec<f64> = (0..4000).map(|n| 0.9 * (n as f64 * 0.05).sin()).collect();
        let x = Waveform::new(x, 16_000).unwrap();
        let clips = [0, 1, 2, 3].map(|i| clip(x.clone(), &format!("c{i}")));
        let raw = build_mixture_tree(
            clips.clone(),
            &GainPolicy::fixed(1.0),
            &StftConfig::default(),
        )
        .unwrap();
        for (r, v) in raw.root.samples().iter().zip(x.samples()) {
            assert!((r - 4.0 * v).abs() < 1e-12);
        }
        let policy = GainPolicy { normalize_peak: true, ..GainPolicy::fixed(1.0) };
        let norm = build_mixture_tree(clips, &policy, &StftConfig::default()).unwrap();
        assert!((norm.root.peak() - PEAK_TARGET).abs() < 1e-12);
    }

    #[test]
    fn tree_invariants_hold() {
        let tree = build_mixture_tree(
            four_clips(4000, 3),
            &GainPolicy::default().with_seed(5),
            &StftConfig::default(),
        )
        .unwrap();
        for n in 0..4000 {
            let r = tree.root.samples()[n];
            assert!((r - tree.mid[0].samples()[n] - tree.mid[1].samples()[n]).abs() < 1e-9);
            for k in 0..2 {
                let want = tree.gains[2 * k] * tree.leaves[2 * k].audio.samples()[n]
                    + tree.gains[2 * k + 1] * tree.leaves[2 * k + 1].audio.samples()[n];
                assert!((tree.mid[k].samples()[n] - want).abs() < 1e-9);
            }
            let flat: f64 = (0..4).map(|i| tree.gains[i] * tree.leaves[i].audio.samples()[n]).sum();
            assert!((r - flat).abs() < 1e-12);
        }
        assert!(tree.root.peak() <= 1.0);
        assert_eq!(tree.prompts.len(), 6);
        assert_eq!(tree.targets.len(), 6);
        assert_eq!(tree.prompts[&PromptNode::M1], "c0 and c1");
    }

    #[test]
    fn stft_of_root_is_sum_of_mids() {
        let cfg = StftConfig::default();
        let tree =
            build_mixture_tree(four_clips(6000, 8), &GainPolicy::default(), &cfg).unwrap();
        let s1 = stft(&tree.mid[0], &cfg).unwrap();
        let s2 = stft(&tree.mid[1], &cfg).unwrap();
        let sum = &s1.bins + &s2.bins;
        let scale = sum.iter().fold(0.0f64, |m, c| m.max(c.norm()));
        let err = (&tree.root_spec.bins - &sum).iter().fold(0.0f64, |m, c| m.max(c.norm()));
        assert!(err <= 1e-9 * scale);
    }

    #[test]
    fn single_targets_reconstruct_scaled_leaves() {
        let cfg = StftConfig::default();
        let tree =
            build_mixture_tree(four_clips(6000, 9), &GainPolicy::default(), &cfg).unwrap();
        for (i, node) in PromptNode::SINGLES.iter().enumerate() {
            let leaf = tree.scaled_leaf(i);
            let (_, phase) = crate::dsp::magnitude_phase(&stft(&leaf, &cfg).unwrap()).unwrap();
            let spec = ComplexSpectrogram::from_polar(&tree.targets[node], &phase).unwrap();
            let back = crate::dsp::istft(&spec).unwrap();
            assert!(crate::dsp::snr_db(leaf.samples(), back.samples()) >= 60.0);
        }
    }

    #[test]
    fn same_seed_same_tree() {
        let p = GainPolicy::default().with_seed(42);
        let a = build_mixture_tree(four_clips(1000, 1), &p, &StftConfig::default()).unwrap();
        let b = build_mixture_tree(four_clips(1000, 1), &p, &StftConfig::default()).unwrap();
        assert_eq!(a.gains, b.gains);
        assert_eq!(a.root, b.root);
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let tree = build_mixture_tree(
            four_clips(1000, 4),
            &GainPolicy::default(),
            &StftConfig::default(),
        )
        .unwrap();
        let (path, m) = MixtureManifest::write(&tree, dir.path(), "mix0").unwrap();
        let back = MixtureManifest::read(&path).unwrap();
        assert_eq!(back, m);
        let leaves = back.scaled_leaves(dir.path()).unwrap();
        for (i, l) in leaves.iter().enumerate() {
            let want = tree.scaled_leaf(i);
            for (a, b) in l.samples().iter().zip(want.samples()) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }
}
