//! 8-bit pitch representation: 256 bins equally spaced in log2 frequency
//! over 50..550 Hz.

use rand::Rng;

pub const FMIN: f64 = 50.0;
pub const FMAX: f64 = 550.0;
pub const PITCH_BINS: usize = 256;

/// Width of one bin in cents, `1200 * log2(11) / 255` (about 16.28).
pub fn bin_width_cents() -> f64 {
    1200.0 * (FMAX / FMIN).log2() / (PITCH_BINS - 1) as f64
}

/// Fractional bin position of `f0_hz` (after clamping to the pitch range).
pub fn bin_position(f0_hz: f64) -> f64 {
    let f = f0_hz.clamp(FMIN, FMAX);
    (PITCH_BINS - 1) as f64 * (f / FMIN).log2() / (FMAX / FMIN).log2()
}

pub fn quantize_pitch(f0_hz: f64) -> u8 {
    bin_position(f0_hz).round() as u8
}

/// Center frequency of `bin`.
pub fn dequantize_pitch(bin: u8) -> f64 {
    FMIN * 2f64.powf(bin as f64 * (FMAX / FMIN).log2() / (PITCH_BINS - 1) as f64)
}

pub fn cents(f: f64, reference: f64) -> f64 {
    1200.0 * (f / reference).log2()
}

/// Triangular dither applied in the cents domain. The default width spans
/// two bins of 20 cents each (support ±20 cents).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dither {
    pub half_width_cents: f64,
}

impl Default for Dither {
    fn default() -> Self {
        Self {
            half_width_cents: 20.0,
        }
    }
}

impl Dither {
    pub const DISABLED: Dither = Dither {
        half_width_cents: 0.0,
    };

    /// Sum of two uniforms, each spanning half the support.
    pub fn apply<R: Rng + ?Sized>(&self, f0_hz: f64, rng: &mut R) -> f64 {
        if self.half_width_cents == 0.0 {
            return f0_hz;
        }
        let h = self.half_width_cents / 2.0;
        let c = rng.random_range(-h..=h) + rng.random_range(-h..=h);
        f0_hz * 2f64.powf(c / 1200.0)
    }
}
