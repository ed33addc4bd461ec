use std::collections::BTreeMap;

use ndarray::{Array2, Zip};

use super::config::Objective;
use super::model::{LossExample, SeparatorModel};
use crate::dsp::{ideal_ratio_mask, Mask, MagnitudeSpectrogram};
use crate::error::{Error, Result};
use crate::mixer::{MixtureTree, PromptNode};

/// Anything that turns a mixture magnitude and prompts into one mask per
/// prompt.
pub trait MaskPredictor {
    fn predict_masks(&self, mix_mag: &MagnitudeSpectrogram, prompts: &[String]) -> Result<Vec<Mask>>;
}

impl MaskPredictor for SeparatorModel {
    fn predict_masks(&self, mix_mag: &MagnitudeSpectrogram, prompts: &[String]) -> Result<Vec<Mask>> {
        SeparatorModel::predict_masks(self, mix_mag, prompts)
    }
}

/// Ideal ratio masks looked up by prompt text.
#[derive(Debug, Clone, Default)]
pub struct OracleMasks {
    by_prompt: BTreeMap<String, Mask>,
}

impl OracleMasks {
    /// One IRM per source; `prompts[i]` selects `sources[i]`.
    pub fn from_sources(prompts: &[String], sources: &[MagnitudeSpectrogram]) -> Result<Self> {
        if prompts.len() != sources.len() {
            return Err(Error::invalid("one prompt per source required"));
        }
        let masks = ideal_ratio_mask(sources)?;
        Ok(Self { by_prompt: prompts.iter().cloned().zip(masks).collect() })
    }

    /// Leaf IRMs for the single prompts; each pair mask is the sum of its
    /// two leaf masks.
    pub fn from_tree(tree: &MixtureTree) -> Result<Self> {
        let leaves: Vec<MagnitudeSpectrogram> =
            PromptNode::SINGLES.iter().map(|n| tree.targets[n].clone()).collect();
        let masks = ideal_ratio_mask(&leaves)?;
        let pair = |a: &Mask, b: &Mask| Mask::new((a.bins() + b.bins()).mapv(|v| v.min(1.0)));
        let mut by_prompt = BTreeMap::new();
        for (node, m) in PromptNode::SINGLES.iter().zip(&masks) {
            by_prompt.insert(tree.prompts[node].clone(), m.clone());
        }
        by_prompt.insert(tree.prompts[&PromptNode::M1].clone(), pair(&masks[0], &masks[1])?);
        by_prompt.insert(tree.prompts[&PromptNode::M2].clone(), pair(&masks[2], &masks[3])?);
        Ok(Self { by_prompt })
    }
}

impl MaskPredictor for OracleMasks {
    fn predict_masks(&self, mix_mag: &MagnitudeSpectrogram, prompts: &[String]) -> Result<Vec<Mask>> {
        prompts
            .iter()
            .map(|p| {
                let m = self.by_prompt.get(p).ok_or_else(|| Error::invalid(format!("no oracle mask for {p:?}")))?;
                if m.shape() != mix_mag.shape() {
                    return Err(Error::invalid("oracle mask grid differs from the mixture"));
                }
                Ok(m.clone())
            })
            .collect()
    }
}

/// The same constant mask for every prompt; `ConstantMask(1.0)` returns the
/// mixture itself.
#[derive(Debug, Clone, Copy)]
pub struct ConstantMask(pub f64);

impl MaskPredictor for ConstantMask {
    fn predict_masks(&self, mix_mag: &MagnitudeSpectrogram, prompts: &[String]) -> Result<Vec<Mask>> {
        let m = Mask::new(Array2::from_elem(mix_mag.shape(), self.0))?;
        Ok(vec![m; prompts.len()])
    }
}

impl Objective {
    pub fn nodes(self) -> &'static [PromptNode] {
        match self {
            Objective::MultiLevel => &PromptNode::ALL,
            Objective::SingleLevel => &PromptNode::SINGLES,
        }
    }
}

impl LossExample {
    pub fn from_tree(tree: &MixtureTree, objective: Objective) -> Self {
        let nodes = objective.nodes();
        Self {
            mix: tree.root_spec.magnitude().bins,
            prompts: nodes.iter().map(|n| tree.prompts[n].clone()).collect(),
            targets: nodes.iter().map(|n| tree.targets[n].bins.clone()).collect(),
        }
    }
}

/// Mean over the objective's prompts of the mean absolute difference
/// between `mask ⊙ |Z|` and each target magnitude.
pub fn tree_loss(predictor: &dyn MaskPredictor, tree: &MixtureTree, objective: Objective) -> Result<f64> {
    let mix = tree.root_spec.magnitude();
    let nodes = objective.nodes();
    let prompts: Vec<String> = nodes.iter().map(|n| tree.prompts[n].clone()).collect();
    let masks = predictor.predict_masks(&mix, &prompts)?;
    let mut total = 0.0;
    for (node, mask) in nodes.iter().zip(&masks) {
        let target = &tree.targets[node];
        if target.shape() != mix.shape() {
            return Err(Error::invalid("target grid differs from the mixture grid"));
        }
        let est = mask.apply(&mix)?;
        let l1 = Zip::from(&est.bins).and(&target.bins).fold(0.0, |acc, &a, &b| acc + (a - b).abs());
        total += l1 / target.bins.len().max(1) as f64;
    }
    Ok(total / nodes.len() as f64)
}
