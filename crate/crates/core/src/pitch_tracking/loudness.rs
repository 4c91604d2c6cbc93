//! A-weighted loudness used to silence periodicity in quiet frames.

use std::sync::OnceLock;

use rustfft::{num_complex::Complex, FftPlanner};

use crate::signal_io::SAMPLE_RATE;

pub const LOUDNESS_WINDOW: usize = 320;
pub const LOUDNESS_FLOOR: f64 = 1e-10;
/// Level assigned to a full-scale 1 kHz sine.
pub const REFERENCE_DB: f64 = 20.0;
pub const GATE_DB: f64 = -60.0;

/// IEC 61672 A-weighting as a power gain.
pub fn a_weight_power(f: f64) -> f64 {
    if f <= 0.0 {
        return 0.0;
    }
    let f2 = f * f;
    let ra = 12194.0f64.powi(2) * f2 * f2
        / ((f2 + 20.6f64.powi(2))
            * ((f2 + 107.7f64.powi(2)) * (f2 + 737.9f64.powi(2))).sqrt()
            * (f2 + 12194.0f64.powi(2)));
    ra * ra * 10f64.powf(0.2)
}

pub fn a_weight_db(f: f64) -> f64 {
    10.0 * a_weight_power(f).log10()
}

/// A-weighted power, scaled so a unit-amplitude sine at an FFT bin center
/// scores the weight of its frequency.
fn weighted_power(window: &[f64]) -> f64 {
    let n = window.len();
    let mut buf: Vec<Complex<f64>> = window.iter().map(|&s| Complex::new(s, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let mut p = 0.0;
    for (k, c) in buf.iter().enumerate() {
        let bin = k.min(n - k);
        let f = bin as f64 * SAMPLE_RATE as f64 / n as f64;
        p += a_weight_power(f) * c.norm_sqr();
    }
    2.0 * p / (n * n) as f64
}

fn reference_offset() -> f64 {
    static OFFSET: OnceLock<f64> = OnceLock::new();
    *OFFSET.get_or_init(|| {
        let sine: Vec<f64> = (0..LOUDNESS_WINDOW)
            .map(|i| (2.0 * std::f64::consts::PI * 1000.0 * i as f64 / SAMPLE_RATE as f64).sin())
            .collect();
        10.0 * (weighted_power(&sine) + LOUDNESS_FLOOR).log10() - REFERENCE_DB
    })
}

/// `10 log10(sum A(f) |X(f)|^2 + eps) - R` with R chosen so a full-scale
/// 1 kHz sine reads 20 dB.
pub fn a_weighted_loudness(window: &[f64]) -> f64 {
    if window.is_empty() {
        return 10.0 * LOUDNESS_FLOOR.log10() - reference_offset();
    }
    10.0 * (weighted_power(window) + LOUDNESS_FLOOR).log10() - reference_offset()
}
