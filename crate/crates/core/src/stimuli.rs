//! Synthetic test signals: band-limited sawtooth vowels, pulse trains and
//! tones.

use std::f64::consts::PI;

use rand::Rng;

use crate::signal_io::{AudioBuffer, SAMPLE_RATE};

/// (center Hz, bandwidth Hz) for the first three formants.
pub type Formants = [(f64, f64); 3];

pub const VOWELS: [Formants; 5] = [
    [(730.0, 80.0), (1090.0, 90.0), (2440.0, 120.0)],
    [(270.0, 60.0), (2290.0, 100.0), (3010.0, 120.0)],
    [(300.0, 60.0), (870.0, 90.0), (2240.0, 120.0)],
    [(530.0, 70.0), (1840.0, 100.0), (2480.0, 120.0)],
    [(570.0, 70.0), (840.0, 90.0), (2410.0, 120.0)],
];

/// Silence added before and after every synthetic vowel.
pub const PAD_SECONDS: f64 = 0.1;

pub fn sine(freq: f64, amplitude: f64, seconds: f64, sample_rate: u32) -> AudioBuffer {
    let n = (seconds * sample_rate as f64).round() as usize;
    let samples = (0..n)
        .map(|i| amplitude * (2.0 * PI * freq * i as f64 / sample_rate as f64).sin())
        .collect();
    AudioBuffer::new(samples, sample_rate).expect("finite samples")
}

/// Additive sawtooth whose instantaneous frequency is `f0(t)` for sample
/// index `t`; harmonics stop below Nyquist.
pub fn sawtooth_with(f0: impl Fn(usize) -> f64, n: usize, sample_rate: u32) -> Vec<f64> {
    let sr = sample_rate as f64;
    let mut phase = 0.0;
    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        let f = f0(t);
        let harmonics = ((0.5 * sr - 1.0) / f).floor().max(1.0) as usize;
        let mut v = 0.0;
        for k in 1..=harmonics {
            v += (k as f64 * phase).sin() / k as f64;
        }
        out.push(v * 2.0 / PI);
        phase = (phase + 2.0 * PI * f / sr) % (2.0 * PI);
    }
    out
}

pub fn sawtooth(f0: f64, seconds: f64, sample_rate: u32) -> Vec<f64> {
    let n = (seconds * sample_rate as f64).round() as usize;
    sawtooth_with(|_| f0, n, sample_rate)
}

/// Cascade of two-pole resonators, each with unit gain at DC.
pub fn formant_filter(x: &[f64], formants: &Formants, sample_rate: u32) -> Vec<f64> {
    let mut y = x.to_vec();
    for &(f, bw) in formants {
        let r = (-PI * bw / sample_rate as f64).exp();
        let c = 2.0 * r * (2.0 * PI * f / sample_rate as f64).cos();
        let g = 1.0 - c + r * r;
        let (mut y1, mut y2) = (0.0, 0.0);
        for v in y.iter_mut() {
            let out = g * *v + c * y1 - r * r * y2;
            y2 = y1;
            y1 = out;
            *v = out;
        }
    }
    y
}

fn pad_and_scale(mut body: Vec<f64>, peak: f64, sample_rate: u32) -> AudioBuffer {
    let m = body.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if m > 0.0 {
        body.iter_mut().for_each(|v| *v *= peak / m);
    }
    let pad = vec![0.0; (PAD_SECONDS * sample_rate as f64).round() as usize];
    let samples = [pad.as_slice(), &body, &pad].concat();
    AudioBuffer::new(samples, sample_rate).expect("finite samples")
}

/// Sawtooth through three formants, peak 0.5, padded with silence.
pub fn vowel(f0: f64, seconds: f64, formants: &Formants) -> AudioBuffer {
    let src = sawtooth(f0, seconds, SAMPLE_RATE);
    pad_and_scale(formant_filter(&src, formants, SAMPLE_RATE), 0.5, SAMPLE_RATE)
}

/// Vowel with a per-sample f0 trajectory.
pub fn vowel_with(f0: impl Fn(usize) -> f64, n: usize, formants: &Formants) -> AudioBuffer {
    let src = sawtooth_with(f0, n, SAMPLE_RATE);
    pad_and_scale(formant_filter(&src, formants, SAMPLE_RATE), 0.5, SAMPLE_RATE)
}

/// `count` vowels with f0 log-uniform in `[lo, hi]`, cycling through
/// [`VOWELS`].
pub fn vowel_suite<R: Rng + ?Sized>(
    count: usize,
    lo: f64,
    hi: f64,
    seconds: f64,
    rng: &mut R,
) -> Vec<(f64, AudioBuffer)> {
    (0..count)
        .map(|i| {
            let f0 = lo * (hi / lo).powf(rng.random::<f64>());
            (f0, vowel(f0, seconds, &VOWELS[i % VOWELS.len()]))
        })
        .collect()
}

/// Unit impulses every `period` samples starting at `offset`.
pub fn pulse_train(period: usize, offset: usize, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| if i >= offset && (i - offset) % period == 0 { 1.0 } else { 0.0 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formant_filter_unit_dc_gain() {
        let y = formant_filter(&vec![1.0; 8000], &VOWELS[0], SAMPLE_RATE);
        assert!((y[7999] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn vowel_shape() {
        let v = vowel(120.0, 0.5, &VOWELS[1]);
        assert_eq!(v.len(), 1600 + 8000 + 1600);
        assert!((v.peak() - 0.5).abs() < 1e-12);
        assert!(v.samples[..1600].iter().all(|&s| s == 0.0));
    }

    #[test]
    fn sawtooth_band_limited() {
        // 3 kHz fundamental keeps only two harmonics below 8 kHz
        let x = sawtooth(3000.0, 0.01, SAMPLE_RATE);
        let expected: Vec<f64> = (0..x.len())
            .map(|i| {
                let ph = 2.0 * PI * 3000.0 * i as f64 / 16000.0;
                (ph.sin() + (2.0 * ph).sin() / 2.0) * 2.0 / PI
            })
            .collect();
        for (a, b) in x.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn pulses_where_expected() {
        let p = pulse_train(160, 5, 500);
        let idx: Vec<usize> = (0..500).filter(|&i| p[i] == 1.0).collect();
        assert_eq!(idx, vec![5, 165, 325, 485]);
    }
}
