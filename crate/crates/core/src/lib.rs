//! Pitch-shifting and time-stretching of speech with an LPC source-filter
//! vocoder.
//!
//! Audio is analyzed into a 10 ms stream of Bark cepstra, a log-scale
//! quantized pitch and a loudness-gated periodicity. Edits are expressed as a
//! [`synthesis::ControlScript`] (per-frame target pitch and hop size) and
//! rendered sample by sample: an LPC prediction derived from the cepstra plus
//! an excitation drawn from a pluggable backend, either the deterministic
//! pulse/noise source or the trainable toy network.
//!
//! A TD-PSOLA baseline, the resampling augmentation and the F1/RMS/GPE
//! evaluation harness live alongside.

pub mod augment;
pub mod error;
pub mod evaluate;
pub mod lpc;
pub mod neural_excitation;
pub mod pipeline;
pub mod pitch_tracking;
pub mod psola;
pub mod signal_io;
pub mod spectral_features;
pub mod stimuli;
pub mod synthesis;

pub use error::{Error, Result};
