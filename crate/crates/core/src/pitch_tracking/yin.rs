//! Cumulative-mean-normalized difference function and its local minima.

use super::quantize::{FMAX, FMIN};
use crate::error::{Error, Result};
use crate::signal_io::SAMPLE_RATE;

/// Shortest and longest candidate periods, in samples at 16 kHz.
pub fn lag_range() -> (usize, usize) {
    let sr = SAMPLE_RATE as f64;
    ((sr / FMAX).floor() as usize, (sr / FMIN).ceil() as usize)
}

/// Minimum window length accepted by [`yin_frame`].
pub fn min_window() -> usize {
    2 * lag_range().1
}

/// One local minimum of the CMNDF, with parabolic refinement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub lag: f64,
    pub cmndf: f64,
}

impl Candidate {
    pub fn frequency(&self) -> f64 {
        SAMPLE_RATE as f64 / self.lag
    }
}

/// The CMNDF over lags `0..=max_lag + 1`; `None` for a window with no energy.
#[derive(Debug, Clone)]
pub(crate) struct Cmndf {
    values: Vec<f64>,
}

impl Cmndf {
    pub(crate) fn compute(window: &[f64]) -> Option<Self> {
        let (_, max_lag) = lag_range();
        let top = max_lag + 1;
        let w = window.len() - top;
        if window.iter().all(|&s| s == 0.0) {
            return None;
        }
        let mut diff = vec![0.0; top + 1];
        for (tau, d) in diff.iter_mut().enumerate().skip(1) {
            let head = &window[..w];
            let tail = &window[tau..tau + w];
            *d = head
                .iter()
                .zip(tail)
                .map(|(a, b)| {
                    let e = a - b;
                    e * e
                })
                .sum();
        }
        let mut values = vec![1.0; top + 1];
        let mut running = 0.0;
        for tau in 1..=top {
            running += diff[tau];
            values[tau] = if running > 0.0 {
                diff[tau] * tau as f64 / running
            } else {
                1.0
            };
        }
        Some(Self { values })
    }

    /// Linear interpolation at a fractional lag.
    pub(crate) fn at(&self, lag: f64) -> f64 {
        let lag = lag.clamp(1.0, (self.values.len() - 1) as f64);
        let i = lag.floor() as usize;
        if i + 1 >= self.values.len() {
            return self.values[i];
        }
        let frac = lag - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }

    pub(crate) fn candidates(&self) -> Vec<Candidate> {
        let (min_lag, max_lag) = lag_range();
        let v = &self.values;
        let mut out = Vec::new();
        for tau in min_lag.max(2)..=max_lag {
            if v[tau] < v[tau - 1] && v[tau] <= v[tau + 1] {
                let (a, b, c) = (v[tau - 1], v[tau], v[tau + 1]);
                let denom = a - 2.0 * b + c;
                let (shift, value) = if denom > 0.0 {
                    let s = (0.5 * (a - c) / denom).clamp(-0.5, 0.5);
                    (s, b - 0.25 * (a - c) * s)
                } else {
                    (0.0, b)
                };
                out.push(Candidate {
                    lag: tau as f64 + shift,
                    cmndf: value.max(0.0),
                });
            }
        }
        out
    }
}

/// Local minima of the CMNDF within the 50..550 Hz lag range, shortest lag
/// first. Silence yields no candidates.
pub fn yin_frame(window: &[f64]) -> Result<Vec<Candidate>> {
    if window.len() < min_window() {
        return Err(Error::InvalidArgument(format!(
            "yin window of {} samples, need at least {}",
            window.len(),
            min_window()
        )));
    }
    Ok(Cmndf::compute(window)
        .map(|c| c.candidates())
        .unwrap_or_default())
}
