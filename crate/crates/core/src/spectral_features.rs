//! 18-band Bark-frequency cepstral coefficients on the 10 ms frame grid, and
//! the [`FeatureFrame`] conditioning stream built from them.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::OnceLock;

use rand::Rng;
use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{Error, Result};
use crate::pitch_tracking::{
    centered_window, frame_center, frame_count, quantize_pitch, Dither, PitchContour,
};
use crate::signal_io::{AudioBuffer, SAMPLE_RATE};

pub const NB_BANDS: usize = 18;
pub const WINDOW: usize = 320;
pub const ENERGY_FLOOR: f64 = 1e-10;

const FEATURE_MAGIC: &[u8; 4] = b"CLPF";
const FEATURE_VERSION: u32 = 1;

pub fn hz_to_bark(f: f64) -> f64 {
    13.0 * (0.00076 * f).atan() + 3.5 * (f / 7500.0).powi(2).atan()
}

fn bark_to_hz(z: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, SAMPLE_RATE as f64);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if hz_to_bark(mid) < z {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Band centers: 18 points evenly spaced in Bark from 0 Hz to Nyquist. Each
/// band is a triangle reaching from its left neighbour's center to its right
/// neighbour's, so the bands form a partition of unity over 0..8 kHz.
pub fn band_centers_hz() -> &'static [f64; NB_BANDS] {
    static CENTERS: OnceLock<[f64; NB_BANDS]> = OnceLock::new();
    CENTERS.get_or_init(|| {
        let top = hz_to_bark(SAMPLE_RATE as f64 / 2.0);
        let mut c = [0.0; NB_BANDS];
        for (i, v) in c.iter_mut().enumerate() {
            *v = bark_to_hz(top * i as f64 / (NB_BANDS - 1) as f64);
        }
        c[0] = 0.0;
        c[NB_BANDS - 1] = SAMPLE_RATE as f64 / 2.0;
        c
    })
}

/// Triangular weight of band `b` at frequency `f`.
pub fn band_weight(b: usize, f: f64) -> f64 {
    let c = band_centers_hz();
    if f == c[b] {
        return 1.0;
    }
    if f < c[b] {
        if b == 0 || f <= c[b - 1] {
            return 0.0;
        }
        (f - c[b - 1]) / (c[b] - c[b - 1])
    } else {
        if b == NB_BANDS - 1 || f >= c[b + 1] {
            return 0.0;
        }
        (c[b + 1] - f) / (c[b + 1] - c[b])
    }
}

fn hann() -> &'static [f64] {
    static W: OnceLock<Vec<f64>> = OnceLock::new();
    W.get_or_init(|| {
        (0..WINDOW)
            .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / WINDOW as f64).cos())
            .collect()
    })
}

/// Filterbank over the one-sided spectrum of a 320-point frame, with each
/// band's weights normalized so white noise of variance s^2 gives s^2 in
/// every band.
struct Filterbank {
    weights: Vec<Vec<f64>>,
}

impl Filterbank {
    fn get() -> &'static Self {
        static FB: OnceLock<Filterbank> = OnceLock::new();
        FB.get_or_init(|| {
            let window_energy: f64 = hann().iter().map(|w| w * w).sum();
            let bins = WINDOW / 2 + 1;
            let weights = (0..NB_BANDS)
                .map(|b| {
                    let raw: Vec<f64> = (0..bins)
                        .map(|k| band_weight(b, k as f64 * SAMPLE_RATE as f64 / WINDOW as f64))
                        .collect();
                    let total: f64 = raw.iter().sum();
                    raw.iter().map(|w| w / (total * window_energy)).collect()
                })
                .collect();
            Filterbank { weights }
        })
    }
}

fn dct_basis() -> &'static [[f64; NB_BANDS]; NB_BANDS] {
    static BASIS: OnceLock<[[f64; NB_BANDS]; NB_BANDS]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let n = NB_BANDS as f64;
        let mut m = [[0.0; NB_BANDS]; NB_BANDS];
        for (k, row) in m.iter_mut().enumerate() {
            let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            for (i, v) in row.iter_mut().enumerate() {
                *v = scale * (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / n).cos();
            }
        }
        m
    })
}

/// Orthonormal DCT-II.
pub fn dct(x: &[f64; NB_BANDS]) -> [f64; NB_BANDS] {
    let basis = dct_basis();
    let mut out = [0.0; NB_BANDS];
    for (o, row) in out.iter_mut().zip(basis) {
        *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
    }
    out
}

/// Inverse of [`dct`] (orthonormal DCT-III).
pub fn idct(c: &[f64; NB_BANDS]) -> [f64; NB_BANDS] {
    let basis = dct_basis();
    let mut out = [0.0; NB_BANDS];
    for (k, row) in basis.iter().enumerate() {
        for (o, b) in out.iter_mut().zip(row) {
            *o += c[k] * b;
        }
    }
    out
}

/// Band energies measured directly from a 320-sample frame (Hann applied
/// here).
pub fn measure_band_energies(window: &[f64]) -> Result<[f64; NB_BANDS]> {
    if window.len() != WINDOW {
        return Err(Error::LengthMismatch {
            expected: WINDOW,
            actual: window.len(),
        });
    }
    let mut buf: Vec<Complex<f64>> = window
        .iter()
        .zip(hann())
        .map(|(s, w)| Complex::new(s * w, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(WINDOW).process(&mut buf);
    let power: Vec<f64> = buf[..WINDOW / 2 + 1].iter().map(|c| c.norm_sqr()).collect();
    let fb = Filterbank::get();
    let mut e = [0.0; NB_BANDS];
    for (v, w) in e.iter_mut().zip(&fb.weights) {
        *v = w.iter().zip(&power).map(|(a, b)| a * b).sum();
    }
    Ok(e)
}

/// 18 cepstral coefficients: orthonormal DCT of the log band energies
/// (floored at 1e-10).
pub fn bfcc(window: &[f64]) -> Result<[f64; NB_BANDS]> {
    let e = measure_band_energies(window)?;
    Ok(energies_to_bfcc(&e))
}

pub fn energies_to_bfcc(energies: &[f64; NB_BANDS]) -> [f64; NB_BANDS] {
    let mut log_e = [0.0; NB_BANDS];
    for (l, &e) in log_e.iter_mut().zip(energies) {
        *l = e.max(ENERGY_FLOOR).ln();
    }
    dct(&log_e)
}

/// Band energies recovered from cepstra.
pub fn band_energies(bfcc: &[f64; NB_BANDS]) -> [f64; NB_BANDS] {
    let mut e = idct(bfcc);
    for v in e.iter_mut() {
        *v = v.exp();
    }
    e
}

/// The per-frame conditioning unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureFrame {
    pub bfcc: [f64; NB_BANDS],
    pub pitch_bin: u8,
    pub periodicity: f64,
}

/// BFCCs of every frame, zipped with the (optionally dithered) quantized
/// pitch and the periodicity of `contour`. `audio` is the preemphasized
/// signal.
pub fn extract_features<R: Rng + ?Sized>(
    audio: &AudioBuffer,
    contour: &PitchContour,
    dither: Dither,
    rng: &mut R,
) -> Result<Vec<FeatureFrame>> {
    let n = frame_count(audio.len());
    if contour.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: contour.len(),
        });
    }
    let cepstra: Vec<[f64; NB_BANDS]> = (0..n)
        .into_par_iter()
        .map(|i| bfcc(&centered_window(&audio.samples, frame_center(i), WINDOW)))
        .collect::<Result<_>>()?;
    Ok(cepstra
        .into_iter()
        .enumerate()
        .map(|(i, c)| FeatureFrame {
            bfcc: c,
            pitch_bin: quantize_pitch(dither.apply(contour.f0_hz[i], rng)),
            periodicity: contour.periodicity[i],
        })
        .collect())
}

pub fn write_features(frames: &[FeatureFrame], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(12 + frames.len() * (NB_BANDS * 4 + 5));
    buf.extend_from_slice(FEATURE_MAGIC);
    buf.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(frames.len() as u32).to_le_bytes());
    for f in frames {
        for c in &f.bfcc {
            buf.extend_from_slice(&(*c as f32).to_le_bytes());
        }
        buf.push(f.pitch_bin);
        buf.extend_from_slice(&(f.periodicity as f32).to_le_bytes());
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_features(path: impl AsRef<Path>) -> Result<Vec<FeatureFrame>> {
    let path = path.as_ref();
    let mut data = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut data))
        .map_err(|e| Error::io(path, e))?;
    if data.len() < 12 || &data[..4] != FEATURE_MAGIC {
        return Err(Error::MalformedHeader(format!(
            "{}: not a feature file",
            path.display()
        )));
    }
    let version = u32::from_le_bytes(data[4..8].try_into().unwrap());
    if version != FEATURE_VERSION {
        return Err(Error::UnsupportedFormat(format!(
            "{}: feature file version {version}",
            path.display()
        )));
    }
    let count = u32::from_le_bytes(data[8..12].try_into().unwrap()) as usize;
    let record = NB_BANDS * 4 + 5;
    if data.len() != 12 + count * record {
        return Err(Error::MalformedHeader(format!(
            "{}: expected {count} frames",
            path.display()
        )));
    }
    let f32_at = |o: usize| f32::from_le_bytes(data[o..o + 4].try_into().unwrap()) as f64;
    Ok((0..count)
        .map(|i| {
            let base = 12 + i * record;
            let mut bfcc = [0.0; NB_BANDS];
            for (k, c) in bfcc.iter_mut().enumerate() {
                *c = f32_at(base + 4 * k);
            }
            FeatureFrame {
                bfcc,
                pitch_bin: data[base + NB_BANDS * 4],
                periodicity: f32_at(base + NB_BANDS * 4 + 1),
            }
        })
        .collect())
}

pub fn write_features_csv(frames: &[FeatureFrame], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    let mut header = vec!["frame".to_string()];
    header.extend((0..NB_BANDS).map(|k| format!("c{k}")));
    header.push("pitch_bin".into());
    header.push("periodicity".into());
    w.write_record(&header)?;
    for (i, f) in frames.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(f.bfcc.iter().map(|c| c.to_string()));
        row.push(f.pitch_bin.to_string());
        row.push(f.periodicity.to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn bands_partition_unity() {
        for k in 0..=160 {
            let f = k as f64 * 50.0;
            let s: f64 = (0..NB_BANDS).map(|b| band_weight(b, f)).sum();
            assert!((s - 1.0).abs() < 1e-12, "{f}: {s}");
        }
        let c = band_centers_hz();
        assert!(c.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn dct_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let mut x = [0.0; NB_BANDS];
            for v in x.iter_mut() {
                *v = rng.random_range(-5.0..5.0);
            }
            let y = idct(&dct(&x));
            for (a, b) in x.iter().zip(&y) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn silence_only_dc() {
        let c = bfcc(&[0.0; WINDOW]).unwrap();
        let expected = ENERGY_FLOOR.ln() * (NB_BANDS as f64).sqrt();
        assert!((c[0] - expected).abs() < 1e-9);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn gain_moves_c0_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<f64> = (0..WINDOW).map(|_| rng.random_range(-0.3..0.3)).collect();
        let g = 2.5f64;
        let y: Vec<f64> = x.iter().map(|v| v * g).collect();
        let (a, b) = (bfcc(&x).unwrap(), bfcc(&y).unwrap());
        let shift = 2.0 * g.ln() * (NB_BANDS as f64).sqrt();
        assert!((b[0] - a[0] - shift).abs() < 1e-9);
        for k in 1..NB_BANDS {
            assert!((a[k] - b[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn white_noise_bands_flat() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let normal = Normal::new(0.0, 0.1).unwrap();
        let mut mean = [0.0; NB_BANDS];
        for _ in 0..100 {
            let x: Vec<f64> = (0..WINDOW).map(|_| normal.sample(&mut rng)).collect();
            let e = measure_band_energies(&x).unwrap();
            for (m, v) in mean.iter_mut().zip(&e) {
                *m += v / 100.0;
            }
        }
        let db: Vec<f64> = mean.iter().map(|e| 10.0 * (e / 0.01).log10()).collect();
        let (lo, hi) = db
            .iter()
            .fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
        assert!(hi - lo < 3.0, "{db:?}");
        assert!(db.iter().all(|d| d.abs() < 1.5), "{db:?}");
    }

    #[test]
    fn energies_invert() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x: Vec<f64> = (0..WINDOW).map(|_| rng.random_range(-0.5..0.5)).collect();
        let measured = measure_band_energies(&x).unwrap();
        let back = band_energies(&bfcc(&x).unwrap());
        for (m, b) in measured.iter().zip(&back) {
            assert!((m - b).abs() <= 1e-6 * m);
        }
        assert!(band_energies(&[0.0; NB_BANDS]).iter().all(|&e| (e - 1.0).abs() < 1e-15));
    }

    #[test]
    fn impulse_train_matches_direct_filterbank() {
        // naive DFT + explicit triangle sums, independent of the FFT path
        let x: Vec<f64> = (0..WINDOW).map(|n| if n % 80 == 0 { 1.0 } else { 0.0 }).collect();
        let win: Vec<f64> = (0..WINDOW)
            .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / WINDOW as f64).cos())
            .collect();
        let wsum: f64 = win.iter().map(|w| w * w).sum();
        let power: Vec<f64> = (0..=WINDOW / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for n in 0..WINDOW {
                    let ph = 2.0 * std::f64::consts::PI * (k * n) as f64 / WINDOW as f64;
                    re += x[n] * win[n] * ph.cos();
                    im -= x[n] * win[n] * ph.sin();
                }
                re * re + im * im
            })
            .collect();
        let back = band_energies(&bfcc(&x).unwrap());
        for b in 0..NB_BANDS {
            let w: Vec<f64> = (0..=WINDOW / 2).map(|k| band_weight(b, k as f64 * 50.0)).collect();
            let direct = w.iter().zip(&power).map(|(a, p)| a * p).sum::<f64>()
                / (w.iter().sum::<f64>() * wsum);
            let expected = direct.max(ENERGY_FLOOR);
            assert!((back[b] - expected).abs() <= 1e-6 * expected, "band {b}");
        }
    }

    #[test]
    fn features_frame_count_and_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let audio = AudioBuffer::silence(16000, SAMPLE_RATE);
        let contour = PitchContour::new(vec![100.0; 100], vec![0.0; 100]).unwrap();
        let f = extract_features(&audio, &contour, Dither::DISABLED, &mut rng).unwrap();
        assert_eq!(f.len(), 100);
        assert!(f.iter().all(|fr| fr.periodicity == 0.0 && fr.pitch_bin == 74));

        let short = PitchContour::new(vec![100.0; 99], vec![0.0; 99]).unwrap();
        assert!(extract_features(&audio, &short, Dither::DISABLED, &mut rng).is_err());
    }

    #[test]
    fn feature_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.bin");
        let frames: Vec<FeatureFrame> = (0..5)
            .map(|i| FeatureFrame {
                bfcc: [i as f64 * 0.5; NB_BANDS],
                pitch_bin: i as u8 * 30,
                periodicity: 0.25 * i as f64 % 1.0,
            })
            .collect();
        write_features(&frames, &path).unwrap();
        assert_eq!(read_features(&path).unwrap(), frames);

        std::fs::write(&path, b"CLPF\x01\x00\x00\x00\x09\x00\x00\x00").unwrap();
        assert!(read_features(&path).is_err());
    }
}
