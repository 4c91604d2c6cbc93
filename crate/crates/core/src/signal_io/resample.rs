//! Band-limited resampling with a Kaiser-windowed sinc kernel.
//!
//! The kernel spans 64 taps measured at the lower of the two rates, so a
//! 3:1 decimation convolves 192 input samples per output sample. The kernel
//! is tabulated once per call and linearly interpolated.

use std::f64::consts::PI;

use super::AudioBuffer;
use crate::error::{Error, Result};

const TAPS: usize = 64;
const KAISER_BETA: f64 = 5.0;
/// Cutoff relative to the lower Nyquist frequency.
const ROLLOFF: f64 = 0.96;
const TABLE_RESOLUTION: usize = 512;

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..64 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Kernel tabulated over `u` in `[0, TAPS/2]` low-rate samples.
struct Kernel {
    table: Vec<f64>,
}

impl Kernel {
    fn new() -> Self {
        let half = (TAPS / 2) as f64;
        let n = TAPS / 2 * TABLE_RESOLUTION + 2;
        let norm = bessel_i0(KAISER_BETA);
        let table = (0..n)
            .map(|i| {
                let u = i as f64 / TABLE_RESOLUTION as f64;
                if u >= half {
                    return 0.0;
                }
                let x = ROLLOFF * u;
                let sinc = if x == 0.0 {
                    1.0
                } else {
                    (PI * x).sin() / (PI * x)
                };
                let r = u / half;
                let window = bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / norm;
                ROLLOFF * sinc * window
            })
            .collect();
        Self { table }
    }

    fn at(&self, u: f64) -> f64 {
        let pos = u.abs() * TABLE_RESOLUTION as f64;
        let i = pos as usize;
        if i + 1 >= self.table.len() {
            return 0.0;
        }
        let frac = pos - i as f64;
        self.table[i] * (1.0 - frac) + self.table[i + 1] * frac
    }
}

/// Resample by `ratio = out_rate / in_rate`; the output has
/// `round(len * ratio)` samples.
pub fn resample_by_ratio(samples: &[f64], ratio: f64) -> Result<Vec<f64>> {
    if !(ratio.is_finite() && ratio > 0.0) {
        return Err(Error::InvalidArgument(format!("resampling ratio {ratio}")));
    }
    let out_len = (samples.len() as f64 * ratio).round() as usize;
    if ratio == 1.0 {
        return Ok(samples.to_vec());
    }
    let kernel = Kernel::new();
    // distances are measured in samples of the lower rate
    let scale = ratio.min(1.0);
    let reach = (TAPS / 2) as f64 / scale;
    let n = samples.len() as isize;
    let out = (0..out_len)
        .map(|m| {
            let t = m as f64 / ratio;
            let lo = ((t - reach).ceil() as isize).max(0);
            let hi = ((t + reach).floor() as isize).min(n - 1);
            let mut acc = 0.0;
            for j in lo..=hi {
                acc += samples[j as usize] * kernel.at((t - j as f64) * scale);
            }
            acc * scale
        })
        .collect();
    Ok(out)
}

pub fn resample(x: &AudioBuffer, to: u32) -> Result<AudioBuffer> {
    if to == 0 {
        return Err(Error::InvalidSampleRate(to));
    }
    if to == x.sample_rate {
        return Ok(x.clone());
    }
    let samples = resample_by_ratio(&x.samples, to as f64 / x.sample_rate as f64)?;
    Ok(AudioBuffer {
        samples,
        sample_rate: to,
    })
}
