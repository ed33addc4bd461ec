//! Text-conditioned mask estimation, training and checkpoints.

mod checkpoint;
mod config;
mod eval;
mod gradcheck;
mod model;
mod predictor;
mod tokenizer;
mod train;

pub use checkpoint::{Checkpoint, FORMAT_VERSION, MAGIC};
pub use config::{Objective, SeparatorConfig};
pub use eval::{mean_sdr, score_case, two_source_cases, CaseScores, TwoSourceCase};
pub use gradcheck::{check_gradients, relative_error, GroupCheck};
pub use model::{LossExample, SeparatorModel, TextEmbedding};
pub use predictor::{tree_loss, ConstantMask, MaskPredictor, OracleMasks};
pub use train::{resume, train, write_epoch_csv, ClipPart, ClipPool, EpochLog, TrainConfig, TrainState, TRAIN_FRACTION};
pub use tokenizer::{freq_features, positional_encoding, Token, Vocabulary, FREQ_TOKEN, NUM_TOKEN};

use crate::dsp::{apply_mask_and_reconstruct, stft, StftConfig, Waveform};
use crate::error::{Error, Result};

/// Separates `mix` once per prompt; every output has the mixture's length.
pub fn separate(mix: &Waveform, prompts: &[String], predictor: &dyn MaskPredictor, cfg: &StftConfig) -> Result<Vec<Waveform>> {
    if prompts.is_empty() {
        return Err(Error::invalid("at least one prompt is required"));
    }
    let spec = stft(mix, cfg)?;
    let masks = predictor.predict_masks(&spec.magnitude(), prompts)?;
    masks.iter().map(|m| apply_mask_and_reconstruct(&spec, m)).collect()
}
