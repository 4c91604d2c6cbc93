//! Pitch and periodicity extraction.
//!
//! Each 10 ms frame contributes YIN candidates, which are spread onto the
//! 256 log-spaced pitch bins as emission weights. A Viterbi pass over the
//! bins picks a smooth trajectory, the candidate nearest each decoded bin
//! supplies the refined frequency and periodicity, and frames quieter than
//! -60 dB (A-weighted) have their periodicity forced to zero.

mod loudness;
mod quantize;
mod viterbi;
mod yin;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use loudness::{
    a_weight_db, a_weighted_loudness, GATE_DB, LOUDNESS_FLOOR, LOUDNESS_WINDOW, REFERENCE_DB,
};
pub use quantize::{
    bin_position, bin_width_cents, cents, dequantize_pitch, quantize_pitch, Dither, FMAX, FMIN,
    PITCH_BINS,
};
pub use viterbi::{Emission, Viterbi};
pub use yin::{lag_range, min_window, yin_frame, Candidate};

use crate::error::{Error, Result};
use crate::signal_io::{AudioBuffer, SAMPLE_RATE};
use yin::Cmndf;

/// Samples per analysis frame (10 ms at 16 kHz).
pub const FRAME_HOP: usize = 160;

/// Default periodicity threshold for calling a frame voiced.
pub const VOICING_THRESHOLD: f64 = 0.5;

/// `ceil(samples / 160)`
pub fn frame_count(samples: usize) -> usize {
    samples.div_ceil(FRAME_HOP)
}

/// Center sample of frame `i`.
pub fn frame_center(i: usize) -> usize {
    i * FRAME_HOP + FRAME_HOP / 2
}

/// `len` samples centered on `center`, zero-padded outside the signal.
pub(crate) fn centered_window(x: &[f64], center: usize, len: usize) -> Vec<f64> {
    let start = center as isize - (len / 2) as isize;
    (0..len as isize)
        .map(|i| {
            let j = start + i;
            if j < 0 || j as usize >= x.len() {
                0.0
            } else {
                x[j as usize]
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PitchContour {
    pub f0_hz: Vec<f64>,
    pub periodicity: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ContourRow {
    frame_index: usize,
    f0_hz: f64,
    periodicity: f64,
    voiced: bool,
}

impl PitchContour {
    pub fn new(f0_hz: Vec<f64>, periodicity: Vec<f64>) -> Result<Self> {
        if f0_hz.len() != periodicity.len() {
            return Err(Error::LengthMismatch {
                expected: f0_hz.len(),
                actual: periodicity.len(),
            });
        }
        Ok(Self {
            f0_hz: f0_hz.into_iter().map(|f| f.clamp(FMIN, FMAX)).collect(),
            periodicity: periodicity.into_iter().map(|p| p.clamp(0.0, 1.0)).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.f0_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0_hz.is_empty()
    }

    /// Voiced where periodicity is at least `threshold`.
    pub fn voiced(&self, threshold: f64) -> Vec<bool> {
        self.periodicity.iter().map(|&p| p >= threshold).collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        for (i, (&f, &p)) in self.f0_hz.iter().zip(&self.periodicity).enumerate() {
            w.serialize(ContourRow {
                frame_index: i,
                f0_hz: f,
                periodicity: p,
                voiced: p >= VOICING_THRESHOLD,
            })?;
        }
        w.flush().map_err(|e| Error::io(path.as_ref(), e))?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = csv::Reader::from_path(path.as_ref())?;
        let mut contour = PitchContour::default();
        for (i, row) in r.deserialize::<ContourRow>().enumerate() {
            let row = row?;
            if row.frame_index != i {
                return Err(Error::Parse(format!(
                    "contour row {i} has frame_index {}",
                    row.frame_index
                )));
            }
            contour.f0_hz.push(row.f0_hz.clamp(FMIN, FMAX));
            contour.periodicity.push(row.periodicity.clamp(0.0, 1.0));
        }
        Ok(contour)
    }
}

/// Zero the periodicity of frames quieter than [`GATE_DB`].
pub fn gate_periodicity(contour: &PitchContour, loudness_db: &[f64]) -> Result<PitchContour> {
    if contour.len() != loudness_db.len() {
        return Err(Error::LengthMismatch {
            expected: contour.len(),
            actual: loudness_db.len(),
        });
    }
    let periodicity = contour
        .periodicity
        .iter()
        .zip(loudness_db)
        .map(|(&p, &l)| if l < GATE_DB { 0.0 } else { p })
        .collect();
    Ok(PitchContour {
        f0_hz: contour.f0_hz.clone(),
        periodicity,
    })
}

/// Per-frame A-weighted loudness over 320-sample windows on the frame grid.
pub fn frame_loudness(audio: &AudioBuffer) -> Vec<f64> {
    (0..frame_count(audio.len()))
        .into_par_iter()
        .map(|i| {
            a_weighted_loudness(&centered_window(
                &audio.samples,
                frame_center(i),
                LOUDNESS_WINDOW,
            ))
        })
        .collect()
}

/// Minimum emission weight for bins without a candidate.
pub const EMISSION_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy)]
pub struct TrackerConfig {
    /// YIN analysis window in samples.
    pub window: usize,
    /// Candidates with CMNDF below this count as a clear period; later
    /// (longer-lag) candidates are treated as subharmonics.
    pub dip_threshold: f64,
    /// Emission multiplier for candidates beyond the first clear dip.
    pub subharmonic_discount: f64,
    pub viterbi: Viterbi,
    pub gate_db: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            window: 800,
            dip_threshold: 0.15,
            subharmonic_discount: 0.5,
            viterbi: Viterbi::default(),
            gate_db: GATE_DB,
        }
    }
}

struct FrameAnalysis {
    cmndf: Option<Cmndf>,
    candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PitchTracker {
    pub config: TrackerConfig,
}

impl PitchTracker {
    pub fn new(config: TrackerConfig) -> Self {
        Self { config }
    }

    /// Emission weights for one frame: `max(0, 1 - cmndf)` per candidate,
    /// spread linearly over the two nearest bins, over a floor of one minus
    /// the strongest weight (at least [`EMISSION_FLOOR`]). `None` when no
    /// candidate carries weight (the caller substitutes a uniform emission).
    pub fn emission(&self, candidates: &[Candidate]) -> Option<Emission> {
        let mut e: Emission = [0.0; PITCH_BINS];
        let first_dip = candidates
            .iter()
            .position(|c| c.cmndf < self.config.dip_threshold);
        for (k, c) in candidates.iter().enumerate() {
            let mut w = (1.0 - c.cmndf).max(0.0);
            if matches!(first_dip, Some(d) if k > d) {
                w *= self.config.subharmonic_discount;
            }
            if w <= 0.0 {
                continue;
            }
            let pos = bin_position(c.frequency());
            let lo = pos.floor() as usize;
            let frac = pos - lo as f64;
            e[lo] = e[lo].max(w * (1.0 - frac));
            if lo + 1 < PITCH_BINS {
                e[lo + 1] = e[lo + 1].max(w * frac);
            }
        }
        let strongest = e.iter().copied().fold(0.0, f64::max);
        if strongest <= 0.0 {
            return None;
        }
        let floor = (1.0 - strongest).max(EMISSION_FLOOR);
        for v in e.iter_mut() {
            *v = v.max(floor);
        }
        Some(e)
    }

    /// Pitch and gated periodicity for 16 kHz audio, one frame per 160
    /// samples.
    pub fn track(&self, audio: &AudioBuffer) -> Result<PitchContour> {
        if audio.sample_rate != SAMPLE_RATE {
            return Err(Error::InvalidSampleRate(audio.sample_rate));
        }
        if self.config.window < min_window() {
            return Err(Error::InvalidArgument(format!(
                "tracker window {} below {}",
                self.config.window,
                min_window()
            )));
        }
        let n = frame_count(audio.len());
        let frames: Vec<FrameAnalysis> = (0..n)
            .into_par_iter()
            .map(|i| {
                let w = centered_window(&audio.samples, frame_center(i), self.config.window);
                let cmndf = Cmndf::compute(&w);
                let candidates = cmndf.as_ref().map(|c| c.candidates()).unwrap_or_default();
                FrameAnalysis { cmndf, candidates }
            })
            .collect();

        let emissions: Vec<Emission> = frames
            .iter()
            .map(|f| self.emission(&f.candidates).unwrap_or([1.0; PITCH_BINS]))
            .collect();
        let path = self.config.viterbi.decode(&emissions)?;

        let mut f0_hz = Vec::with_capacity(n);
        let mut periodicity = Vec::with_capacity(n);
        for (frame, &bin) in frames.iter().zip(&path) {
            let nearest = frame
                .candidates
                .iter()
                .map(|c| (c, (bin_position(c.frequency()) - bin as f64).abs()))
                .filter(|(_, d)| *d <= 1.5)
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(c, _)| *c);
            let (f, p) = match (nearest, &frame.cmndf) {
                (Some(c), _) => (c.frequency(), 1.0 - c.cmndf),
                (None, Some(curve)) => {
                    let f = dequantize_pitch(bin);
                    (f, 1.0 - curve.at(SAMPLE_RATE as f64 / f))
                }
                (None, None) => (dequantize_pitch(bin), 0.0),
            };
            f0_hz.push(f.clamp(FMIN, FMAX));
            periodicity.push(p.clamp(0.0, 1.0));
        }

        let loudness = frame_loudness(audio);
        let periodicity = periodicity
            .into_iter()
            .zip(&loudness)
            .map(|(p, &l)| if l < self.config.gate_db { 0.0 } else { p })
            .collect();
        Ok(PitchContour {
            f0_hz,
            periodicity,
        })
    }
}

/// [`PitchTracker::track`] with default settings.
pub fn track(audio: &AudioBuffer) -> Result<PitchContour> {
    PitchTracker::default().track(audio)
}
