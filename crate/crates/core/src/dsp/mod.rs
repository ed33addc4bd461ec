//! Time-frequency analysis and synthesis.
//!
//! Everything here is a pure function over immutable inputs.

mod mask;
mod stft;
pub mod wav;
mod waveform;

pub use mask::{apply_mask_and_reconstruct, ideal_ratio_mask, Mask, IRM_EPSILON};
pub use stft::{
    istft, magnitude_phase, stft, ComplexSpectrogram, MagnitudeSpectrogram, PhaseGrid,
    StftConfig, WindowKind,
};
pub use waveform::{snr_db, Waveform};
