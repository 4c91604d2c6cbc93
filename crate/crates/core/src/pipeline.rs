//! End-to-end analysis and rendering.
//!
//! Analysis: resample to 16 kHz, high-pass, quiet-signal normalization,
//! pitch tracking, then preemphasis and the limiter ahead of feature
//! extraction. Rendering synthesizes in the preemphasized domain, then
//! deemphasizes and limits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::psola::{detect_marks, psola_modify};
use crate::pitch_tracking::{Dither, PitchContour, PitchTracker, TrackerConfig};
use crate::signal_io::{
    deemphasis, highpass, limit, normalize_quiet, preemphasis, resample, AudioBuffer, PREEMPHASIS,
    SAMPLE_RATE,
};
use crate::spectral_features::{extract_features, FeatureFrame};
use crate::synthesis::{
    constant_shift_script, synthesize, ControlScript, DspBackend, ExcitationBackend,
};

#[derive(Debug, Clone, Copy)]
pub struct AnalysisConfig {
    pub highpass: bool,
    pub preemphasis: f64,
    pub tracker: TrackerConfig,
    pub dither: Dither,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            highpass: true,
            preemphasis: PREEMPHASIS,
            tracker: TrackerConfig::default(),
            dither: Dither::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Analysis {
    /// Conditioned 16 kHz audio (before preemphasis).
    pub audio: AudioBuffer,
    pub contour: PitchContour,
    pub features: Vec<FeatureFrame>,
}

/// Resampling, high-pass and quiet-signal normalization.
pub fn condition(audio: &AudioBuffer, cfg: &AnalysisConfig) -> Result<AudioBuffer> {
    let mut x = resample(audio, SAMPLE_RATE)?;
    if cfg.highpass {
        x = highpass(&x)?;
    }
    Ok(normalize_quiet(&x))
}

pub fn analyze<R: Rng + ?Sized>(
    audio: &AudioBuffer,
    cfg: &AnalysisConfig,
    rng: &mut R,
) -> Result<Analysis> {
    let audio = condition(audio, cfg)?;
    let contour = PitchTracker::new(cfg.tracker).track(&audio)?;
    let emphasized = limit(&preemphasis(&audio, cfg.preemphasis)?);
    let features = extract_features(&emphasized, &contour, cfg.dither, rng)?;
    Ok(Analysis {
        audio,
        contour,
        features,
    })
}

pub fn render<B, R>(
    script: &ControlScript,
    backend: &mut B,
    rng: &mut R,
    cfg: &AnalysisConfig,
) -> Result<AudioBuffer>
where
    B: ExcitationBackend + ?Sized,
    R: Rng + ?Sized,
{
    let y = synthesize(script, backend, rng)?;
    Ok(limit(&deemphasis(&y, cfg.preemphasis)?))
}

/// Tracks pitch on already-conditioned audio with the default tracker.
pub fn track_conditioned(audio: &AudioBuffer, cfg: &AnalysisConfig) -> Result<PitchContour> {
    PitchTracker::new(cfg.tracker).track(&condition(audio, cfg)?)
}

/// Constant-ratio pitch shift and time stretch with any excitation backend.
pub fn edit_with<B: ExcitationBackend + ?Sized>(
    audio: &AudioBuffer,
    pitch_ratio: f64,
    stretch_ratio: f64,
    cfg: &AnalysisConfig,
    backend: &mut B,
    seed: u64,
) -> Result<AudioBuffer> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = analyze(audio, cfg, &mut rng)?;
    let script = constant_shift_script(&a.features, &a.contour, pitch_ratio)?.stretched(stretch_ratio)?;
    render(&script, backend, &mut rng, cfg)
}

/// [`edit_with`] using the pulse/noise backend.
pub fn edit_dsp(
    audio: &AudioBuffer,
    pitch_ratio: f64,
    stretch_ratio: f64,
    cfg: &AnalysisConfig,
    seed: u64,
) -> Result<AudioBuffer> {
    edit_with(
        audio,
        pitch_ratio,
        stretch_ratio,
        cfg,
        &mut DspBackend::new(seed.wrapping_add(1)),
        seed,
    )
}

/// TD-PSOLA with constant pitch and time ratios on conditioned audio.
pub fn edit_psola(
    audio: &AudioBuffer,
    pitch_ratio: f64,
    stretch_ratio: f64,
    cfg: &AnalysisConfig,
) -> Result<AudioBuffer> {
    let x = condition(audio, cfg)?;
    let contour = PitchTracker::new(cfg.tracker).track(&x)?;
    let marks = detect_marks(&x, &contour)?;
    let pitch: Vec<f64> = contour.f0_hz.iter().map(|f| f * pitch_ratio).collect();
    psola_modify(&x, &marks, &contour, &pitch, &vec![stretch_ratio; contour.len()])
}
