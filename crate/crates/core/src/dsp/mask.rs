use ndarray::{Array2, Zip};

use super::{istft, magnitude_phase, ComplexSpectrogram, MagnitudeSpectrogram, Waveform};
use crate::error::{Error, Result};

/// Regularizer in the ideal-ratio-mask denominator.
pub const IRM_EPSILON: f64 = 1e-8;

/// Soft time-frequency mask with entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    bins: Array2<f64>,
}

impl Mask {
    pub fn new(bins: Array2<f64>) -> Result<Self> {
        if let Some(v) = bins.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("mask value {v} outside [0, 1]")));
        }
        Ok(Self { bins })
    }

    pub fn ones(shape: (usize, usize)) -> Self {
        Self {
            bins: Array2::ones(shape),
        }
    }

    pub fn zeros(shape: (usize, usize)) -> Self {
        Self {
            bins: Array2::zeros(shape),
        }
    }

    pub fn bins(&self) -> &Array2<f64> {
        &self.bins
    }

    pub fn shape(&self) -> (usize, usize) {
        self.bins.dim()
    }

    /// Mask times magnitude, bin by bin.
    pub fn apply(&self, mag: &MagnitudeSpectrogram) -> Result<MagnitudeSpectrogram> {
        if self.shape() != mag.shape() {
            return Err(Error::invalid(format!(
                "mask shape {:?} does not match spectrogram {:?}",
                self.shape(),
                mag.shape()
            )));
        }
        Ok(MagnitudeSpectrogram {
            bins: &self.bins * &mag.bins,
            ..mag.clone()
        })
    }
}

/// Filters the mixture magnitude with `mask`, reattaches the mixture phase,
/// and synthesizes a waveform of the mixture's original length.
pub fn apply_mask_and_reconstruct(mix: &ComplexSpectrogram, mask: &Mask) -> Result<Waveform> {
    let (mag, phase) = magnitude_phase(mix)?;
    let filtered = mask.apply(&mag)?;
    istft(&ComplexSpectrogram::from_polar(&filtered, &phase)?)
}

/// Ratio masks `|S_i| / (Σ_j |S_j| + ε)` for two or more sources.
pub fn ideal_ratio_mask(sources: &[MagnitudeSpectrogram]) -> Result<Vec<Mask>> {
    if sources.len() < 2 {
        return Err(Error::invalid("ideal ratio mask needs at least two sources"));
    }
    let shape = sources[0].shape();
    if sources.iter().any(|s| s.shape() != shape) {
        return Err(Error::invalid("source spectrograms differ in shape"));
    }
    let mut total = Array2::<f64>::zeros(shape);
    for s in sources {
        total += &s.bins;
    }
    total.mapv_inplace(|t| t + IRM_EPSILON);
    Ok(sources
        .iter()
        .map(|s| {
            let mut m = Array2::zeros(shape);
            Zip::from(&mut m)
                .and(&s.bins)
                .and(&total)
                .for_each(|m, &v, &t| *m = (v / t).clamp(0.0, 1.0));
            Mask { bins: m }
        })
        .collect())
}
