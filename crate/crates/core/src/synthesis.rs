//! Control scripts for pitch and duration edits, and the sample-by-sample
//! autoregressive synthesis loop.
//!
//! Each frame contributes `hop` output samples with its conditioning held
//! constant. Frame durations are kept as real numbers and converted to
//! integer hops by rounding cumulative positions, so the total length is the
//! rounded ideal length and repeated stretches compose without drift.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lpc::{mulaw_decode, mulaw_encode, predict, LpcFrame, LPC_ORDER};
use crate::neural_excitation::{sample_excitation, CategoricalDist256, SAMPLING_THRESHOLD};
use crate::pitch_tracking::{
    dequantize_pitch, quantize_pitch, PitchContour, FMAX, FMIN, FRAME_HOP,
};
use crate::signal_io::{AudioBuffer, SAMPLE_RATE};
use crate::spectral_features::FeatureFrame;

/// Stretch ratios outside this range are accepted with a warning.
pub const RATIO_RANGE: (f64, f64) = (0.25, 4.0);

#[derive(Debug, Clone, PartialEq)]
pub struct ControlFrame {
    pub features: FeatureFrame,
    pub target_pitch_bin: u8,
    pub periodicity: f64,
    /// Ideal output length of this frame in samples.
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ControlScript {
    pub frames: Vec<ControlFrame>,
}

impl ControlScript {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Integer hop per frame: differences of rounded cumulative durations.
    pub fn hops(&self) -> Vec<usize> {
        let mut hops = Vec::with_capacity(self.frames.len());
        let mut pos = 0.0;
        let mut prev = 0i64;
        for f in &self.frames {
            pos += f.duration;
            let end = pos.round() as i64;
            hops.push((end - prev) as usize);
            prev = end;
        }
        hops
    }

    pub fn output_len(&self) -> usize {
        self.frames.iter().map(|f| f.duration).sum::<f64>().round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        for (i, f) in self.frames.iter().enumerate() {
            if !(f.duration >= 1.0) || !f.duration.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "frame {i}: duration {} below one sample",
                    f.duration
                )));
            }
            if !(0.0..=1.0).contains(&f.periodicity) {
                return Err(Error::InvalidArgument(format!(
                    "frame {i}: periodicity {} outside [0, 1]",
                    f.periodicity
                )));
            }
        }
        Ok(())
    }

    /// Scales every frame duration by `ratio`.
    pub fn stretched(&self, ratio: f64) -> Result<Self> {
        check_ratio(ratio)?;
        let s = Self {
            frames: self
                .frames
                .iter()
                .map(|f| ControlFrame {
                    duration: f.duration * ratio,
                    ..f.clone()
                })
                .collect(),
        };
        s.validate()?;
        Ok(s)
    }

    /// CSV with columns frame, target_f0_hz, periodicity, hop_samples.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        for (i, (f, hop)) in self.frames.iter().zip(self.hops()).enumerate() {
            w.serialize(ScriptRow {
                frame: i,
                target_f0_hz: dequantize_pitch(f.target_pitch_bin),
                periodicity: f.periodicity,
                hop_samples: hop as f64,
            })?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Reads a script CSV and attaches the analysis features it edits.
    pub fn read_csv(path: impl AsRef<Path>, features: &[FeatureFrame]) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path)?;
        let mut frames = Vec::new();
        for (i, row) in r.deserialize::<ScriptRow>().enumerate() {
            let row = row?;
            if row.frame != i {
                return Err(Error::Parse(format!("{}: frame {} out of order", path.display(), row.frame)));
            }
            let feat = features.get(i).ok_or(Error::LengthMismatch {
                expected: features.len(),
                actual: i + 1,
            })?;
            if row.hop_samples.fract() != 0.0 || row.hop_samples < 1.0 {
                return Err(Error::Parse(format!(
                    "{}: frame {i}: hop must be a positive integer",
                    path.display()
                )));
            }
            if !(row.target_f0_hz > 0.0) {
                return Err(Error::Parse(format!("{}: frame {i}: bad target f0", path.display())));
            }
            frames.push(ControlFrame {
                features: *feat,
                target_pitch_bin: quantize_pitch(row.target_f0_hz),
                periodicity: row.periodicity.clamp(0.0, 1.0),
                duration: row.hop_samples,
            });
        }
        if frames.len() != features.len() {
            return Err(Error::LengthMismatch {
                expected: features.len(),
                actual: frames.len(),
            });
        }
        Ok(Self { frames })
    }
}

#[derive(Serialize, Deserialize)]
struct ScriptRow {
    frame: usize,
    target_f0_hz: f64,
    periodicity: f64,
    hop_samples: f64,
}

fn check_ratio(ratio: f64) -> Result<()> {
    if !(ratio > 0.0) || !ratio.is_finite() {
        return Err(Error::InvalidArgument(format!("ratio {ratio} must be positive")));
    }
    Ok(())
}

fn check_lengths(features: &[FeatureFrame], contour: &PitchContour) -> Result<()> {
    if features.len() != contour.len() {
        return Err(Error::LengthMismatch {
            expected: features.len(),
            actual: contour.len(),
        });
    }
    Ok(())
}

/// Script that reproduces the analysis unchanged.
pub fn passthrough_script(features: &[FeatureFrame], contour: &PitchContour) -> Result<ControlScript> {
    constant_shift_script(features, contour, 1.0)
}

pub fn constant_shift_script(
    features: &[FeatureFrame],
    contour: &PitchContour,
    ratio: f64,
) -> Result<ControlScript> {
    check_ratio(ratio)?;
    let pitch: Vec<f64> = contour.f0_hz.iter().map(|f| f * ratio).collect();
    variable_script(features, contour, &pitch, &vec![1.0; contour.len()])
}

pub fn constant_stretch_script(
    features: &[FeatureFrame],
    contour: &PitchContour,
    ratio: f64,
) -> Result<ControlScript> {
    check_ratio(ratio)?;
    variable_script(features, contour, &contour.f0_hz, &vec![ratio; contour.len()])
}

/// Per-frame target pitch in Hz (clamped to the pitch range) and per-frame
/// stretch ratio.
pub fn variable_script(
    features: &[FeatureFrame],
    contour: &PitchContour,
    pitch_hz: &[f64],
    ratios: &[f64],
) -> Result<ControlScript> {
    check_lengths(features, contour)?;
    for arr in [pitch_hz.len(), ratios.len()] {
        if arr != features.len() {
            return Err(Error::LengthMismatch {
                expected: features.len(),
                actual: arr,
            });
        }
    }
    let mut warned = false;
    let frames = features
        .iter()
        .zip(&contour.periodicity)
        .zip(pitch_hz.iter().zip(ratios))
        .map(|((feat, &p), (&f0, &r))| {
            check_ratio(r)?;
            if !(f0 > 0.0) {
                return Err(Error::InvalidArgument(format!("target pitch {f0} Hz")));
            }
            if !warned && !(RATIO_RANGE.0..=RATIO_RANGE.1).contains(&r) {
                log::warn!("stretch ratio {r} outside [{}, {}]", RATIO_RANGE.0, RATIO_RANGE.1);
                warned = true;
            }
            Ok(ControlFrame {
                features: *feat,
                target_pitch_bin: quantize_pitch(f0.clamp(FMIN, FMAX)),
                periodicity: p,
                duration: r * FRAME_HOP as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let script = ControlScript { frames };
    script.validate()?;
    Ok(script)
}

/// What a backend sees while producing one sample.
pub struct FrameContext<'a> {
    pub index: usize,
    pub frame: &'a ControlFrame,
    pub lpc: &'a LpcFrame,
    pub f0_hz: f64,
}

/// Source of excitation distributions for the synthesis loop.
pub trait ExcitationBackend {
    /// Called once per script before the first sample.
    fn prepare(&mut self, _script: &ControlScript, _lpc: &[LpcFrame]) -> Result<()> {
        Ok(())
    }

    fn next(
        &mut self,
        prev_excitation: u8,
        prev_sample: u8,
        prediction: u8,
        ctx: &FrameContext,
    ) -> CategoricalDist256;
}

pub fn script_lpc(script: &ControlScript) -> Result<Vec<LpcFrame>> {
    script
        .frames
        .par_iter()
        .map(|f| LpcFrame::from_bfcc(&f.features.bfcc))
        .collect()
}

pub fn synthesize<B, R>(script: &ControlScript, backend: &mut B, rng: &mut R) -> Result<AudioBuffer>
where
    B: ExcitationBackend + ?Sized,
    R: Rng + ?Sized,
{
    synthesize_from(script, backend, rng, [0.0; LPC_ORDER])
}

/// As [`synthesize`], starting from the given 16-sample output history
/// (oldest first).
pub fn synthesize_from<B, R>(
    script: &ControlScript,
    backend: &mut B,
    rng: &mut R,
    history: [f64; LPC_ORDER],
) -> Result<AudioBuffer>
where
    B: ExcitationBackend + ?Sized,
    R: Rng + ?Sized,
{
    script.validate()?;
    let lpc = script_lpc(script)?;
    backend.prepare(script, &lpc)?;
    let mut hist = history;
    let mut out = Vec::with_capacity(script.output_len());
    let mut prev_exc = mulaw_encode(0.0);
    let mut prev_sample = mulaw_encode(hist[LPC_ORDER - 1]);
    for (i, (frame, hop)) in script.frames.iter().zip(script.hops()).enumerate() {
        let ctx = FrameContext {
            index: i,
            frame,
            lpc: &lpc[i],
            f0_hz: dequantize_pitch(frame.target_pitch_bin),
        };
        for s in 0..hop {
            let p = predict(&hist, &lpc[i].a);
            let pred_code = mulaw_encode(p);
            let dist = backend.next(prev_exc, prev_sample, pred_code, &ctx);
            dist.validate(i, s)?;
            let code = sample_excitation(&dist, rng, SAMPLING_THRESHOLD);
            let x = (p + mulaw_decode(code)).clamp(-1.0, 1.0);
            out.push(x);
            hist.rotate_left(1);
            hist[LPC_ORDER - 1] = x;
            prev_exc = code;
            prev_sample = mulaw_encode(x);
        }
    }
    AudioBuffer::new(out, SAMPLE_RATE)
}

/// Deterministic pulse/noise excitation: a pulse of amplitude `sqrt(E*T0)`
/// each time the phase accumulator wraps, mixed with white noise of variance
/// `E` by periodicity. Emits the one-hot distribution of the result's code.
pub struct DspBackend {
    rng: ChaCha8Rng,
    phase: f64,
    last_excitation: f64,
}

impl DspBackend {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            phase: 0.0,
            last_excitation: 0.0,
        }
    }

    /// Unquantized excitation of the most recent call.
    pub fn last_excitation(&self) -> f64 {
        self.last_excitation
    }

    pub fn excitation(&mut self, gain: f64, f0_hz: f64, periodicity: f64) -> f64 {
        let gain = gain.max(0.0);
        self.phase += f0_hz / SAMPLE_RATE as f64;
        let pulse = if self.phase >= 1.0 - 1e-9 {
            self.phase -= 1.0;
            (gain * SAMPLE_RATE as f64 / f0_hz).sqrt()
        } else {
            0.0
        };
        let noise = if gain > 0.0 {
            Normal::new(0.0, gain.sqrt()).expect("finite std").sample(&mut self.rng)
        } else {
            0.0
        };
        periodicity * pulse + (1.0 - periodicity) * noise
    }
}

impl ExcitationBackend for DspBackend {
    fn prepare(&mut self, _script: &ControlScript, _lpc: &[LpcFrame]) -> Result<()> {
        self.phase = 0.0;
        Ok(())
    }

    fn next(&mut self, _: u8, _: u8, _: u8, ctx: &FrameContext) -> CategoricalDist256 {
        let e = self.excitation(ctx.lpc.gain, ctx.f0_hz, ctx.frame.periodicity);
        self.last_excitation = e;
        CategoricalDist256::one_hot(mulaw_encode(e))
    }
}
