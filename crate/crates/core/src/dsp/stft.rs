use std::f64::consts::PI;

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::Waveform;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    /// Periodic Hann window.
    Hann,
    Rectangular,
}

impl WindowKind {
    fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            WindowKind::Hann => (0..len)
                .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
                .collect(),
            WindowKind::Rectangular => vec![1.0; len],
        }
    }
}

/// Frame geometry of the short-time Fourier transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub window_length: usize,
    pub hop_length: usize,
    pub window_kind: WindowKind,
    pub fft_length: usize,
}

impl Default for StftConfig {
    /// 1022-sample Hann window with a 256-sample hop, giving 512 bins.
    fn default() -> Self {
        Self {
            window_length: 1022,
            hop_length: 256,
            window_kind: WindowKind::Hann,
            fft_length: 1022,
        }
    }
}

impl StftConfig {
    pub fn new(window_length: usize, hop_length: usize) -> Self {
        Self {
            window_length,
            hop_length,
            window_kind: WindowKind::Hann,
            fft_length: window_length,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hop_length == 0 {
            return Err(Error::invalid("hop_length must be positive"));
        }
        if self.hop_length > self.window_length {
            return Err(Error::invalid("hop_length must not exceed window_length"));
        }
        if self.window_length > self.fft_length {
            return Err(Error::invalid("window_length must not exceed fft_length"));
        }
        Ok(())
    }

    pub fn freq_bins(&self) -> usize {
        self.fft_length / 2 + 1
    }

    /// Samples of reflect padding added at each end before framing.
    pub fn pad(&self) -> usize {
        self.fft_length / 2
    }

    pub fn frames_for(&self, len: usize) -> usize {
        1 + (len + 2 * self.pad() - self.fft_length) / self.hop_length
    }

    /// Analysis window zero-padded (centered) to `fft_length`.
    fn padded_window(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.fft_length];
        let offset = (self.fft_length - self.window_length) / 2;
        w[offset..offset + self.window_length]
            .copy_from_slice(&self.window_kind.coefficients(self.window_length));
        w
    }

    /// Center frequency of bin `k` in Hz.
    pub fn bin_frequency(&self, k: usize, sample_rate: u32) -> f64 {
        k as f64 * sample_rate as f64 / self.fft_length as f64
    }
}

/// Complex STFT, frequency × frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    pub bins: Array2<Complex64>,
    pub config: StftConfig,
    pub sample_rate: u32,
    pub original_length: usize,
}

/// Non-negative magnitudes with the metadata of the spectrogram they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeSpectrogram {
    pub bins: Array2<f64>,
    pub config: StftConfig,
    pub sample_rate: u32,
    pub original_length: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGrid {
    pub bins: Array2<f64>,
}

impl ComplexSpectrogram {
    pub fn shape(&self) -> (usize, usize) {
        self.bins.dim()
    }

    pub fn magnitude(&self) -> MagnitudeSpectrogram {
        MagnitudeSpectrogram {
            bins: self.bins.mapv(|c| c.norm()),
            config: self.config,
            sample_rate: self.sample_rate,
            original_length: self.original_length,
        }
    }

    /// Rebuilds a complex spectrogram from polar components.
    pub fn from_polar(mag: &MagnitudeSpectrogram, phase: &PhaseGrid) -> Result<Self> {
        if mag.bins.dim() != phase.bins.dim() {
            return Err(Error::invalid("magnitude and phase grids differ in shape"));
        }
        let mut bins = Array2::zeros(mag.bins.dim());
        Zip::from(&mut bins)
            .and(&mag.bins)
            .and(&phase.bins)
            .for_each(|b, &m, &p| *b = Complex64::from_polar(m, p));
        Ok(Self {
            bins,
            config: mag.config,
            sample_rate: mag.sample_rate,
            original_length: mag.original_length,
        })
    }

    /// Σ|X|² over the spectrogram, with one-sided bins counted twice.
    pub fn energy(&self) -> f64 {
        let n = self.config.fft_length;
        let nyquist = if n % 2 == 0 { Some(n / 2) } else { None };
        self.bins
            .indexed_iter()
            .map(|((k, _), c)| {
                let w = if k == 0 || Some(k) == nyquist { 1.0 } else { 2.0 };
                w * c.norm_sqr()
            })
            .sum()
    }

    /// Spectrogram energy rescaled so a steady-state signal matches its
    /// waveform energy.
    pub fn window_normalized_energy(&self) -> f64 {
        let w = self.config.padded_window();
        let wsq: f64 = w.iter().map(|v| v * v).sum();
        self.energy() * self.config.hop_length as f64 / (self.config.fft_length as f64 * wsq)
    }
}

impl MagnitudeSpectrogram {
    pub fn shape(&self) -> (usize, usize) {
        self.bins.dim()
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            bins: &self.bins * gain,
            ..self.clone()
        }
    }
}

fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= len as isize {
        j = period - j;
    }
    j as usize
}

/// Short-time Fourier transform with reflect padding of `fft_length / 2`
/// samples at both ends so frames are centered on the signal.
pub fn stft(x: &Waveform, cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    cfg.validate()?;
    if x.is_empty() {
        return Err(Error::invalid("cannot transform an empty waveform"));
    }
    if let Some(i) = x.samples().iter().position(|s| !s.is_finite()) {
        return Err(Error::invalid(format!("sample {i} is not finite")));
    }
    let n = x.len();
    let pad = cfg.pad() as isize;
    let samples = x.samples();
    let padded: Vec<f64> = (0..n + 2 * cfg.pad())
        .map(|i| samples[reflect_index(i as isize - pad, n)])
        .collect();

    let frames = cfg.frames_for(n);
    let bins_n = cfg.freq_bins();
    let window = cfg.padded_window();
    let fft = FftPlanner::new().plan_fft_forward(cfg.fft_length);
    let mut buf = vec![Complex64::default(); cfg.fft_length];
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    let mut bins = Array2::zeros((bins_n, frames));
    for t in 0..frames {
        let start = t * cfg.hop_length;
        for (k, b) in buf.iter_mut().enumerate() {
            *b = Complex64::new(padded[start + k] * window[k], 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for k in 0..bins_n {
            bins[(k, t)] = buf[k];
        }
    }
    Ok(ComplexSpectrogram {
        bins,
        config: *cfg,
        sample_rate: x.sample_rate(),
        original_length: n,
    })
}

/// Inverse STFT by weighted overlap-add with least-squares window
/// normalization; output is trimmed to the recorded original length.
pub fn istft(spec: &ComplexSpectrogram) -> Result<Waveform> {
    let cfg = &spec.config;
    cfg.validate()?;
    let (bins_n, frames) = spec.bins.dim();
    if bins_n != cfg.freq_bins() {
        return Err(Error::invalid(format!(
            "spectrogram has {bins_n} bins, config expects {}",
            cfg.freq_bins()
        )));
    }
    if spec.original_length == 0 || frames != cfg.frames_for(spec.original_length) {
        return Err(Error::invalid(format!(
            "spectrogram has {frames} frames, inconsistent with original length {}",
            spec.original_length
        )));
    }
    if spec.bins.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::invalid("spectrogram contains non-finite values"));
    }

    let n_fft = cfg.fft_length;
    let window = cfg.padded_window();
    let ifft = FftPlanner::new().plan_fft_inverse(n_fft);
    let mut scratch = vec![Complex64::default(); ifft.get_inplace_scratch_len()];
    let mut buf = vec![Complex64::default(); n_fft];
    let total = (frames - 1) * cfg.hop_length + n_fft;
    let mut out = vec![0.0; total];
    let mut norm = vec![0.0; total];
    for t in 0..frames {
        for k in 0..n_fft {
            buf[k] = if k < bins_n {
                spec.bins[(k, t)]
            } else {
                spec.bins[(n_fft - k, t)].conj()
            };
        }
        // DC and Nyquist must be real for a real signal.
        buf[0].im = 0.0;
        if n_fft % 2 == 0 {
            buf[n_fft / 2].im = 0.0;
        }
        ifft.process_with_scratch(&mut buf, &mut scratch);
        let start = t * cfg.hop_length;
        for k in 0..n_fft {
            out[start + k] += buf[k].re / n_fft as f64 * window[k];
            norm[start + k] += window[k] * window[k];
        }
    }
    let pad = cfg.pad();
    let samples = (pad..pad + spec.original_length)
        .map(|i| if norm[i] > 1e-10 { out[i] / norm[i] } else { 0.0 })
        .collect();
    Waveform::new(samples, spec.sample_rate)
}

/// Splits a spectrogram into magnitude and phase; zero bins get phase 0.
pub fn magnitude_phase(spec: &ComplexSpectrogram) -> Result<(MagnitudeSpectrogram, PhaseGrid)> {
    if spec.bins.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::invalid("spectrogram contains non-finite values"));
    }
    let phase = spec
        .bins
        .mapv(|c| if c.re == 0.0 && c.im == 0.0 { 0.0 } else { c.im.atan2(c.re) });
    Ok((spec.magnitude(), PhaseGrid { bins: phase }))
}
