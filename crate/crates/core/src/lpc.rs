//! Linear prediction from Bark cepstra, and the 8-bit mu-law codec used for
//! excitations and sample-rate network inputs.
//!
//! Cepstra are turned back into band energies, the energies are linearly
//! interpolated onto a 257-point power spectrum (0..8 kHz), and the inverse
//! transform of that spectrum gives the autocorrelation that Levinson-Durbin
//! solves for an order-16 predictor.

use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};
use crate::signal_io::SAMPLE_RATE;
use crate::spectral_features::{band_energies, band_weight, NB_BANDS};

pub const LPC_ORDER: usize = 16;
/// Points in the interpolated one-sided power spectrum, minus one.
pub const SPECTRUM_POINTS: usize = 256;
pub const LAG_WINDOW_HZ: f64 = 40.0;
/// Reflection coefficients are clamped to this magnitude.
const MAX_REFLECTION: f64 = 0.9999;

/// Order-16 predictor `p[t] = sum a[i] * x[t-1-i]` plus the final
/// prediction-error energy.
#[derive(Debug, Clone, PartialEq)]
pub struct LpcFrame {
    pub a: [f64; LPC_ORDER],
    pub gain: f64,
    pub reflection: [f64; LPC_ORDER],
    /// Set when a reflection coefficient had to be clamped into (-1, 1).
    pub clamped: bool,
}

impl LpcFrame {
    pub fn silent() -> Self {
        Self {
            a: [0.0; LPC_ORDER],
            gain: 0.0,
            reflection: [0.0; LPC_ORDER],
            clamped: false,
        }
    }

    pub fn from_bfcc(bfcc: &[f64; NB_BANDS]) -> Result<Self> {
        levinson_durbin(&bfcc_to_autocorr(bfcc), LPC_ORDER)
    }
}

/// Gaussian lag window with the given bandwidth.
pub fn lag_window(lag: usize) -> f64 {
    let x = 2.0 * PI * LAG_WINDOW_HZ * lag as f64 / SAMPLE_RATE as f64;
    (-0.5 * x * x).exp()
}

/// Power spectrum at `SPECTRUM_POINTS + 1` evenly spaced frequencies from 0
/// to Nyquist, interpolated linearly between band centers.
pub fn interpolated_spectrum(energies: &[f64; NB_BANDS]) -> Vec<f64> {
    (0..=SPECTRUM_POINTS)
        .map(|k| {
            let f = k as f64 * SAMPLE_RATE as f64 / (2 * SPECTRUM_POINTS) as f64;
            (0..NB_BANDS).map(|b| energies[b] * band_weight(b, f)).sum()
        })
        .collect()
}

/// Autocorrelation lags `0..=16` of the spectrum implied by `bfcc`.
pub fn bfcc_to_autocorr(bfcc: &[f64; NB_BANDS]) -> [f64; LPC_ORDER + 1] {
    energies_to_autocorr(&band_energies(bfcc))
}

pub fn energies_to_autocorr(energies: &[f64; NB_BANDS]) -> [f64; LPC_ORDER + 1] {
    let p = interpolated_spectrum(energies);
    let n = 2 * SPECTRUM_POINTS;
    let mut r = [0.0; LPC_ORDER + 1];
    for (lag, v) in r.iter_mut().enumerate() {
        // inverse real DFT of the even-symmetric 512-point spectrum
        let mut acc = p[0] + p[SPECTRUM_POINTS] * if lag % 2 == 0 { 1.0 } else { -1.0 };
        for (k, pk) in p.iter().enumerate().take(SPECTRUM_POINTS).skip(1) {
            acc += 2.0 * pk * (2.0 * PI * (k * lag) as f64 / n as f64).cos();
        }
        *v = acc / n as f64 * lag_window(lag);
    }
    r
}

/// Levinson-Durbin recursion on `r[0..=order]`.
pub fn levinson_durbin(r: &[f64], order: usize) -> Result<LpcFrame> {
    if order > LPC_ORDER || r.len() <= order {
        return Err(Error::InvalidArgument(format!(
            "order {order} with {} autocorrelation lags",
            r.len()
        )));
    }
    if !(r[0] > 0.0) || r.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidAutocorrelation(r[0]));
    }
    let mut a = [0.0; LPC_ORDER];
    let mut refl = [0.0; LPC_ORDER];
    let mut err = r[0];
    let mut clamped = false;
    for i in 0..order {
        let mut acc = r[i + 1];
        for j in 0..i {
            acc -= a[j] * r[i - j];
        }
        let mut k = acc / err;
        if !(k.abs() < MAX_REFLECTION) || !k.is_finite() {
            k = if k.is_nan() { 0.0 } else { k.clamp(-MAX_REFLECTION, MAX_REFLECTION) };
            clamped = true;
        }
        refl[i] = k;
        let prev = a;
        a[i] = k;
        for j in 0..i {
            a[j] = prev[j] - k * prev[i - 1 - j];
        }
        err *= 1.0 - k * k;
    }
    Ok(LpcFrame {
        a,
        gain: err,
        reflection: refl,
        clamped,
    })
}

/// Prediction from the 16 most recent samples, oldest first.
pub fn predict(history: &[f64; LPC_ORDER], a: &[f64; LPC_ORDER]) -> f64 {
    a.iter()
        .enumerate()
        .map(|(i, c)| c * history[LPC_ORDER - 1 - i])
        .sum()
}

const MU: f64 = 255.0;
/// Companded-domain step between adjacent codes.
const MULAW_SCALE: f64 = 127.5;

/// 8-bit mu-law code. Levels are uniform in the companded domain with code
/// 128 at zero; exact ties round to even so that +-1 land on 255 and 0.
pub fn mulaw_encode(x: f64) -> u8 {
    let x = if x.is_nan() { 0.0 } else { x.clamp(-1.0, 1.0) };
    let y = x.signum() * (1.0 + MU * x.abs()).ln() / (1.0 + MU).ln();
    (128.0 + MULAW_SCALE * y).round_ties_even().clamp(0.0, 255.0) as u8
}

pub fn mulaw_decode(code: u8) -> f64 {
    let y = (code as f64 - 128.0) / MULAW_SCALE;
    let x = y.signum() * ((1.0 + MU).powf(y.abs()) - 1.0) / MU;
    x.clamp(-1.0, 1.0)
}

/// Debug dump of per-frame LPC parameters.
pub fn write_lpc_csv(frames: &[LpcFrame], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    let mut header = vec!["frame".to_string(), "gain".to_string()];
    header.extend((1..=LPC_ORDER).map(|i| format!("a{i}")));
    w.write_record(&header)?;
    for (i, f) in frames.iter().enumerate() {
        let mut row = vec![i.to_string(), f.gain.to_string()];
        row.extend(f.a.iter().map(|c| c.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))?;
    Ok(())
}
