use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::Objective;
use super::model::{LossExample, SeparatorModel};
use crate::corpus::{derive_seed, Corpus, KnowledgeMode};
use crate::dsp::StftConfig;
use crate::error::{Error, Result};
use crate::mixer::{build_mixture_tree_with_rng, GainPolicy, MixtureTree, SourceClip};
use crate::nn::{adam_step, AdamConfig, AdamState};

/// Share of each class's clips used for training; the rest are held out.
pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_every: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub clip_norm: Option<f64>,
    pub batch_trees_per_step: usize,
    pub steps_per_epoch: usize,
    /// Frames of each random training crop; `None` trains on whole clips.
    pub crop_frames: Option<usize>,
    pub objective: Objective,
    pub gain: GainPolicy,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 80,
            lr: 1e-3,
            lr_decay_factor: 0.1,
            lr_decay_every: 20,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            clip_norm: Some(5.0),
            batch_trees_per_step: 1,
            steps_per_epoch: 50,
            crop_frames: Some(16),
            objective: Objective::MultiLevel,
            gain: GainPolicy::default(),
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    /// Short schedule for the toy corpus.
    pub fn toy() -> Self {
        Self {
            epochs: 12,
            lr_decay_every: 8,
            steps_per_epoch: 25,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::invalid("lr must be positive"));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return Err(Error::invalid("lr_decay_factor must be in (0, 1]"));
        }
        if self.lr_decay_every == 0 || self.batch_trees_per_step == 0 || self.steps_per_epoch == 0 {
            return Err(Error::invalid("lr_decay_every, batch_trees_per_step and steps_per_epoch must be positive"));
        }
        if self.crop_frames == Some(0) {
            return Err(Error::invalid("crop_frames must be positive"));
        }
        self.gain.validate()
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay_factor.powi((epoch / self.lr_decay_every) as i32)
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { beta1: self.adam_beta1, beta2: self.adam_beta2, eps: self.adam_eps, clip_norm: self.clip_norm }
    }
}

/// Which part of each class's clips to draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClipPart {
    Train,
    Test,
}

/// Clips per class with the prompt text every clip of that class carries.
#[derive(Debug, Clone)]
pub struct ClipPool {
    classes: BTreeMap<String, Vec<SourceClip>>,
}

impl ClipPool {
    pub fn from_corpus(corpus: &Corpus, classes: &[String], mode: KnowledgeMode, part: ClipPart) -> Result<Self> {
        let mut out = BTreeMap::new();
        for id in classes {
            let prompt = corpus.prompt_for(id, mode).ok_or_else(|| Error::invalid(format!("unknown class {id}")))?;
            let all = corpus.clips_of(id);
            let n_train = ((all.len() as f64 * TRAIN_FRACTION).ceil() as usize).clamp(1, all.len().max(1));
            let picked = match part {
                ClipPart::Train => &all[..n_train.min(all.len())],
                ClipPart::Test if n_train < all.len() => &all[n_train..],
                ClipPart::Test => all,
            };
            if picked.is_empty() {
                return Err(Error::invalid(format!("class {id} has no clips")));
            }
            let clips = picked
                .iter()
                .map(|c| SourceClip { descriptor: Some(prompt.clone()), ..c.clone() })
                .collect();
            out.insert(id.clone(), clips);
        }
        Ok(Self { classes: out })
    }

    pub fn class_ids(&self) -> Vec<String> {
        self.classes.keys().cloned().collect()
    }

    pub fn clips_of(&self, id: &str) -> &[SourceClip] {
        self.classes.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// `n` distinct classes, one random clip from each.
    pub fn draw(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<SourceClip>> {
        let ids: Vec<&String> = self.classes.keys().collect();
        if ids.len() < n {
            return Err(Error::invalid(format!("need {n} classes, pool has {}", ids.len())));
        }
        let chosen: Vec<&&String> = ids.choose_multiple(rng, n).collect();
        let mut chosen: Vec<&String> = chosen.into_iter().copied().collect();
        chosen.shuffle(rng);
        Ok(chosen
            .into_iter()
            .map(|id| self.classes[id].choose(rng).expect("non-empty class").clone())
            .collect())
    }

    pub fn sample_tree(&self, policy: &GainPolicy, stft: &StftConfig, rng: &mut ChaCha8Rng) -> Result<MixtureTree> {
        let clips = self.draw(4, rng)?;
        let seed = rng.gen();
        let clips: [SourceClip; 4] = clips.try_into().expect("four clips");
        build_mixture_tree_with_rng(clips, policy, stft, rng, seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub model: SeparatorModel,
    pub adam: AdamState,
    /// Epochs completed.
    pub epoch: usize,
    pub step: usize,
    pub train_config: TrainConfig,
}

impl TrainState {
    pub fn new(model: SeparatorModel, train_config: TrainConfig) -> Self {
        let adam = AdamState::new(&model.params);
        Self { model, adam, epoch: 0, step: 0, train_config }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
    pub wall_seconds: f64,
}

pub fn write_epoch_csv(path: &Path, logs: &[EpochLog]) -> Result<()> {
    let mut out = String::from("epoch,lr,mean_loss,wall_seconds\n");
    for l in logs {
        out.push_str(&format!("{},{},{},{}\n", l.epoch, l.lr, l.mean_loss, l.wall_seconds));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Training examples for one step, cropped in time when configured.
fn step_examples(pool: &ClipPool, tc: &TrainConfig, stft: &StftConfig, rng: &mut ChaCha8Rng) -> Result<Vec<LossExample>> {
    (0..tc.batch_trees_per_step)
        .map(|_| {
            let tree = pool.sample_tree(&tc.gain, stft, rng)?;
            let ex = LossExample::from_tree(&tree, tc.objective);
            Ok(match tc.crop_frames {
                Some(len) if len < ex.frames() => {
                    let start = rng.gen_range(0..=ex.frames() - len);
                    ex.crop(start, len)
                }
                _ => ex,
            })
        })
        .collect()
}

/// Trains from scratch for `tc.epochs` epochs.
pub fn train(model: SeparatorModel, pool: &ClipPool, tc: &TrainConfig) -> Result<(TrainState, Vec<EpochLog>)> {
    let mut logs = Vec::new();
    let state = resume(TrainState::new(model, *tc), pool, |l| logs.push(l.clone()))?;
    Ok((state, logs))
}

/// Continues `state` up to `state.train_config.epochs`, calling `on_epoch`
/// after each. Every epoch draws from its own seeded stream, so resuming
/// from a saved state reproduces an uninterrupted run.
pub fn resume(mut state: TrainState, pool: &ClipPool, mut on_epoch: impl FnMut(&EpochLog)) -> Result<TrainState> {
    let tc = state.train_config;
    tc.validate()?;
    let stft = state.model.config.stft;
    let adam = tc.adam();
    while state.epoch < tc.epochs {
        let start = Instant::now();
        let epoch = state.epoch;
        let snapshot = state.clone();
        let lr = tc.lr_at(epoch);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(tc.rng_seed, epoch as u64));
        let mut total = 0.0;
        for _ in 0..tc.steps_per_epoch {
            let examples = step_examples(pool, &tc, &stft, &mut rng)?;
            let (loss, mut grads) = state.model.loss_and_grads(&examples)?;
            let finite = loss.is_finite() && grads.iter().all(|g| g.iter().all(|v| v.is_finite()));
            if !finite {
                return Err(Error::TrainingDiverged { epoch, step: state.step, last_good: Box::new(snapshot) });
            }
            adam_step(&mut state.model.params, &mut grads, &mut state.adam, lr, &adam);
            state.step += 1;
            total += loss;
        }
        state.epoch += 1;
        on_epoch(&EpochLog {
            epoch,
            lr,
            mean_loss: total / tc.steps_per_epoch as f64,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(state)
}
