use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::predictor::MaskPredictor;
use super::separate;
use super::train::ClipPool;
use crate::dsp::{StftConfig, Waveform};
use crate::error::Result;
use crate::metrics::{decompose, sdr};
use crate::mixer::{rescale_and_mix_with_rng, GainPolicy};

/// A two-source test mixture with its gain-scaled references.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoSourceCase {
    pub mix: Waveform,
    pub sources: [Waveform; 2],
    pub prompts: [String; 2],
    pub classes: [String; 2],
}

/// `count` mixtures of two distinct classes drawn from `pool`.
pub fn two_source_cases(pool: &ClipPool, policy: &GainPolicy, count: usize, seed: u64) -> Result<Vec<TwoSourceCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let clips = pool.draw(2, &mut rng)?;
            let audio = [clips[0].audio.clone(), clips[1].audio.clone()];
            let (mix, gains) = rescale_and_mix_with_rng(&audio, policy, &mut rng)?;
            Ok(TwoSourceCase {
                mix,
                sources: [audio[0].scaled(gains[0]), audio[1].scaled(gains[1])],
                prompts: [clips[0].prompt().to_string(), clips[1].prompt().to_string()],
                classes: [clips[0].class_label.clone(), clips[1].class_label.clone()],
            })
        })
        .collect()
}

/// Per-source SDRs of prompt-aligned separations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseScores {
    /// `sdr[i]`: output for prompt `i` against source `i`.
    pub sdr: [f64; 2],
    /// `cross[i][j]`: output for prompt `i` against source `j`.
    pub cross: [[f64; 2]; 2],
    /// Mixture used as the estimate for each source.
    pub mixture_sdr: [f64; 2],
    /// With the prompts swapped, output for prompt `i` scored against
    /// both sources.
    pub swapped: Option<[[f64; 2]; 2]>,
}

impl CaseScores {
    /// Each output matches its own source best, and swapping the prompts
    /// swaps the best-matching source.
    pub fn swap_follows_prompt(&self) -> Option<bool> {
        let s = self.swapped?;
        let c = self.cross;
        Some(c[0][0] > c[0][1] && c[1][1] > c[1][0] && s[0][1] > s[0][0] && s[1][0] > s[1][1])
    }
}

fn scores_against(est: &Waveform, refs: &[Waveform]) -> Result<[f64; 2]> {
    Ok([sdr(&decompose(est, refs, 0)?), sdr(&decompose(est, refs, 1)?)])
}

pub fn score_case(predictor: &dyn MaskPredictor, case: &TwoSourceCase, stft: &StftConfig, with_swap: bool) -> Result<CaseScores> {
    let prompts = case.prompts.to_vec();
    let est = separate(&case.mix, &prompts, predictor, stft)?;
    let refs = case.sources.to_vec();
    let cross = [scores_against(&est[0], &refs)?, scores_against(&est[1], &refs)?];
    let mixture_sdr = [sdr(&decompose(&case.mix, &refs, 0)?), sdr(&decompose(&case.mix, &refs, 1)?)];
    let swapped = if with_swap {
        let rev = vec![prompts[1].clone(), prompts[0].clone()];
        let est = separate(&case.mix, &rev, predictor, stft)?;
        Some([scores_against(&est[0], &refs)?, scores_against(&est[1], &refs)?])
    } else {
        None
    };
    Ok(CaseScores { sdr: [cross[0][0], cross[1][1]], cross, mixture_sdr, swapped })
}

/// Mean prompt-aligned SDR and mean mixture-as-estimate SDR.
pub fn mean_sdr(scores: &[CaseScores]) -> (f64, f64) {
    let n = (2 * scores.len()).max(1) as f64;
    let model = scores.iter().flat_map(|s| s.sdr).sum::<f64>() / n;
    let mix = scores.iter().flat_map(|s| s.mixture_sdr).sum::<f64>() / n;
    (model, mix)
}
