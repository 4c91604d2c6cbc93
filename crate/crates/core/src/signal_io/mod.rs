//! Audio buffers, WAV I/O, resampling and the preprocessing chain applied
//! before analysis: high-pass, preemphasis, limiter and quiet-signal
//! normalization.

mod filters;
mod resample;
mod wav;

pub use filters::{highpass, Butterworth, HIGHPASS_CUTOFF_HZ, HIGHPASS_ORDER};
pub use resample::{resample, resample_by_ratio};
pub use wav::{load_wav, save_wav};

use crate::error::{Error, Result};

/// Working sample rate of the whole pipeline.
pub const SAMPLE_RATE: u32 = 16_000;

pub const PREEMPHASIS: f64 = 0.85;

pub const LIMITER_THRESHOLD: f64 = 0.99;
pub const LIMITER_ATTACK_S: f64 = 0.001;
pub const LIMITER_RELEASE_S: f64 = 0.100;

/// Signals whose peak is below this are boosted to [`QUIET_TARGET_PEAK`].
pub const QUIET_PEAK: f64 = 0.2;
pub const QUIET_TARGET_PEAK: f64 = 0.4;

/// Mono audio at a fixed sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidSampleRate(sample_rate));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite sample at {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        peak(&self.samples)
    }

    pub(crate) fn with_samples(&self, samples: Vec<f64>) -> Self {
        Self {
            samples,
            sample_rate: self.sample_rate,
        }
    }
}

pub(crate) fn peak(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, s| m.max(s.abs()))
}

fn check_coef(coef: f64) -> Result<()> {
    if !(coef.abs() < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "emphasis coefficient {coef} outside (-1, 1)"
        )));
    }
    Ok(())
}

/// `y[t] = x[t] - coef * x[t-1]`
pub fn preemphasis(x: &AudioBuffer, coef: f64) -> Result<AudioBuffer> {
    check_coef(coef)?;
    let mut prev = 0.0;
    let samples = x
        .samples
        .iter()
        .map(|&s| {
            let y = s - coef * prev;
            prev = s;
            y
        })
        .collect();
    Ok(x.with_samples(samples))
}

/// Inverse of [`preemphasis`]: `y[t] = x[t] + coef * y[t-1]`.
pub fn deemphasis(x: &AudioBuffer, coef: f64) -> Result<AudioBuffer> {
    check_coef(coef)?;
    let mut prev = 0.0;
    let samples = x
        .samples
        .iter()
        .map(|&s| {
            prev = s + coef * prev;
            prev
        })
        .collect();
    Ok(x.with_samples(samples))
}

/// Look-ahead peak limiter.
///
/// The gain curve is the lower envelope of the per-sample required gain
/// `min(1, threshold / |x|)`, widened backwards by a linear attack ramp and
/// forwards by a linear release ramp. Since the gain never exceeds the
/// required gain, no output sample exceeds the threshold, and a signal that
/// is already below threshold gets unity gain everywhere.
pub fn limit(x: &AudioBuffer) -> AudioBuffer {
    let n = x.samples.len();
    if n == 0 {
        return x.clone();
    }
    let sr = x.sample_rate as f64;
    let attack_step = 1.0 / (LIMITER_ATTACK_S * sr).max(1.0);
    let release_step = 1.0 / (LIMITER_RELEASE_S * sr).max(1.0);

    let mut gain: Vec<f64> = x
        .samples
        .iter()
        .map(|s| {
            let a = s.abs();
            if a > LIMITER_THRESHOLD {
                LIMITER_THRESHOLD / a
            } else {
                1.0
            }
        })
        .collect();
    if gain.iter().all(|&g| g == 1.0) {
        return x.clone();
    }

    // attack: the gain starts falling before a peak arrives
    for i in (0..n - 1).rev() {
        gain[i] = gain[i].min(gain[i + 1] + attack_step);
    }
    // release: recover slowly afterwards
    for i in 1..n {
        gain[i] = gain[i].min(gain[i - 1] + release_step);
    }

    let samples = x
        .samples
        .iter()
        .zip(&gain)
        .map(|(s, g)| (s * g).clamp(-1.0, 1.0))
        .collect();
    x.with_samples(samples)
}

/// Boost quiet utterances: a peak below 0.2 is rescaled to 0.4. Silence is
/// returned unchanged.
pub fn normalize_quiet(x: &AudioBuffer) -> AudioBuffer {
    let p = x.peak();
    if p == 0.0 || p >= QUIET_PEAK {
        return x.clone();
    }
    let g = QUIET_TARGET_PEAK / p;
    x.with_samples(x.samples.iter().map(|s| s * g).collect())
}
