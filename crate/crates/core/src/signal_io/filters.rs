use std::f64::consts::PI;

use super::AudioBuffer;
use crate::error::{Error, Result};

pub const HIGHPASS_CUTOFF_HZ: f64 = 65.0;
pub const HIGHPASS_ORDER: usize = 5;

/// One second-order section, transposed direct form II.
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 3],
}

impl Biquad {
    fn response(&self, w: f64) -> f64 {
        let eval = |c: &[f64; 3]| {
            let re = c[0] + c[1] * w.cos() + c[2] * (2.0 * w).cos();
            let im = -c[1] * w.sin() - c[2] * (2.0 * w).sin();
            (re * re + im * im).sqrt()
        };
        eval(&self.b) / eval(&self.a)
    }

    fn run(&self, x: &mut [f64]) {
        let (mut s1, mut s2) = (0.0, 0.0);
        for v in x.iter_mut() {
            let input = *v;
            let out = self.b[0] * input + s1;
            s1 = self.b[1] * input - self.a[1] * out + s2;
            s2 = self.b[2] * input - self.a[2] * out;
            *v = out;
        }
    }
}

/// Butterworth high-pass realized as cascaded second-order sections
/// (bilinear transform with prewarped cutoff).
#[derive(Debug, Clone)]
pub struct Butterworth {
    sections: Vec<Biquad>,
}

impl Butterworth {
    pub fn highpass(order: usize, cutoff_hz: f64, sample_rate: u32) -> Result<Self> {
        let fs = sample_rate as f64;
        if order == 0 || !(cutoff_hz > 0.0 && cutoff_hz < fs / 2.0) {
            return Err(Error::InvalidArgument(format!(
                "butterworth order {order}, cutoff {cutoff_hz} Hz at {fs} Hz"
            )));
        }
        let k = (PI * cutoff_hz / fs).tan();
        let k2 = k * k;
        let mut sections = Vec::new();
        for i in 0..order / 2 {
            // conjugate pole pair of the normalized analog prototype
            let theta = PI * (2 * i + 1) as f64 / (2 * order) as f64;
            let two_zeta = 2.0 * theta.sin();
            let a0 = 1.0 + k * two_zeta + k2;
            sections.push(Biquad {
                b: [1.0 / a0, -2.0 / a0, 1.0 / a0],
                a: [1.0, 2.0 * (k2 - 1.0) / a0, (1.0 - k * two_zeta + k2) / a0],
            });
        }
        if order % 2 == 1 {
            let a0 = 1.0 + k;
            sections.push(Biquad {
                b: [1.0 / a0, -1.0 / a0, 0.0],
                a: [1.0, (k - 1.0) / a0, 0.0],
            });
        }
        Ok(Self { sections })
    }

    /// Magnitude response at `freq_hz`.
    pub fn magnitude(&self, freq_hz: f64, sample_rate: u32) -> f64 {
        let w = 2.0 * PI * freq_hz / sample_rate as f64;
        self.sections.iter().map(|s| s.response(w)).product()
    }

    pub fn apply(&self, samples: &mut [f64]) {
        for s in &self.sections {
            s.run(samples);
        }
    }
}

/// Fifth-order 65 Hz Butterworth high-pass (causal). Requires 16 kHz input.
pub fn highpass(x: &AudioBuffer) -> Result<AudioBuffer> {
    if x.sample_rate != super::SAMPLE_RATE {
        return Err(Error::InvalidSampleRate(x.sample_rate));
    }
    let filter = Butterworth::highpass(HIGHPASS_ORDER, HIGHPASS_CUTOFF_HZ, x.sample_rate)?;
    let mut samples = x.samples.clone();
    filter.apply(&mut samples);
    Ok(x.with_samples(samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal_io::SAMPLE_RATE;

    fn steady_state_gain_db(freq: f64) -> f64 {
        let n = SAMPLE_RATE as usize * 2;
        let samples: Vec<f64> = (0..n)
            .map(|i| (2.0 * PI * freq * i as f64 / SAMPLE_RATE as f64).sin())
            .collect();
        let y = highpass(&AudioBuffer::new(samples, SAMPLE_RATE).unwrap()).unwrap();
        let tail = &y.samples[n / 2..];
        let rms = (tail.iter().map(|v| v * v).sum::<f64>() / tail.len() as f64).sqrt();
        20.0 * (rms * 2f64.sqrt()).log10()
    }

    #[test]
    fn kills_dc() {
        let x = AudioBuffer::new(vec![1.0; SAMPLE_RATE as usize], SAMPLE_RATE).unwrap();
        let y = highpass(&x).unwrap();
        assert!(y.samples[SAMPLE_RATE as usize / 2..]
            .iter()
            .all(|v| v.abs() < 1e-3));
    }

    #[test]
    fn three_db_at_cutoff() {
        let db = steady_state_gain_db(HIGHPASS_CUTOFF_HZ);
        assert!((db + 3.0).abs() < 0.2, "{db}");
    }

    #[test]
    fn passband_matches_analog_prototype() {
        // analog Butterworth high-pass: |H|^2 = 1 / (1 + (fc/f)^(2n))
        let analog_db = -10.0 * (1.0 + (HIGHPASS_CUTOFF_HZ / 1000.0f64).powi(10)).log10();
        let db = steady_state_gain_db(1000.0);
        assert!(db.abs() < 0.1, "{db}");
        assert!((db - analog_db).abs() < 0.05);
    }

    #[test]
    fn magnitude_follows_butterworth_shape() {
        let f = Butterworth::highpass(5, 65.0, SAMPLE_RATE).unwrap();
        let at_cut = 20.0 * f.magnitude(65.0, SAMPLE_RATE).log10();
        assert!((at_cut + 3.0103).abs() < 1e-3);
        // one octave below cutoff: 30 dB down for a 5th order
        let octave = 20.0 * f.magnitude(32.5, SAMPLE_RATE).log10();
        assert!((octave + 30.1).abs() < 0.5, "{octave}");
    }

    #[test]
    fn wrong_rate_rejected() {
        let x = AudioBuffer::silence(10, 8000);
        assert!(highpass(&x).is_err());
    }
}
