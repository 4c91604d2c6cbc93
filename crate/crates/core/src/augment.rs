//! Resampling augmentation: reinterpret audio at `r` times its rate and
//! resample back, which scales pitch and formants by `r` and duration by
//! `1/r`, then bring it to 16 kHz.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::signal_io::{load_wav, resample, resample_by_ratio, save_wav, AudioBuffer, SAMPLE_RATE};

/// Augmentation ratios as (numerator, denominator), including the identity.
pub const AUGMENT_RATIOS: [(u32, u32); 9] = [
    (1, 2),
    (2, 3),
    (3, 4),
    (4, 5),
    (1, 1),
    (5, 4),
    (4, 3),
    (3, 2),
    (2, 1),
];

pub fn is_standard_ratio(r: f64) -> bool {
    AUGMENT_RATIOS
        .iter()
        .any(|&(n, d)| (r - n as f64 / d as f64).abs() < 1e-9)
}

pub fn resample_augment(x: &AudioBuffer, r: f64) -> Result<AudioBuffer> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidArgument(format!("augmentation ratio {r}")));
    }
    if !is_standard_ratio(r) {
        log::warn!("augmentation ratio {r} is not one of the standard ratios");
    }
    let shifted = if r == 1.0 {
        x.clone()
    } else {
        AudioBuffer::new(resample_by_ratio(&x.samples, 1.0 / r)?, x.sample_rate)?
    };
    resample(&shifted, SAMPLE_RATE)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestRow {
    pub source: String,
    pub ratio: String,
    pub output: String,
}

fn wav_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
        })
        .collect();
    files.sort();
    Ok(files)
}

fn augment_file(path: &Path, dir_out: &Path) -> Result<Vec<ManifestRow>> {
    let audio = load_wav(path)?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    AUGMENT_RATIOS
        .iter()
        .map(|&(n, d)| {
            let out = resample_augment(&audio, n as f64 / d as f64)?;
            let out_path = dir_out.join(format!("{stem}_r{n}-{d}.wav"));
            save_wav(&out, &out_path)?;
            Ok(ManifestRow {
                source: path.display().to_string(),
                ratio: format!("{n}/{d}"),
                output: out_path.display().to_string(),
            })
        })
        .collect()
}

/// Augments every WAV in `dir_in` with all ratios, writing outputs and
/// `manifest.csv` to `dir_out`. Unreadable files are skipped with a warning.
pub fn augment_corpus(dir_in: impl AsRef<Path>, dir_out: impl AsRef<Path>) -> Result<Vec<ManifestRow>> {
    let (dir_in, dir_out) = (dir_in.as_ref(), dir_out.as_ref());
    std::fs::create_dir_all(dir_out).map_err(|e| Error::io(dir_out, e))?;
    let per_file: Vec<Vec<ManifestRow>> = wav_files(dir_in)?
        .par_iter()
        .filter_map(|p| match augment_file(p, dir_out) {
            Ok(rows) => Some(rows),
            Err(e) => {
                log::warn!("skipping {}: {e}", p.display());
                None
            }
        })
        .collect();
    let rows: Vec<ManifestRow> = per_file.into_iter().flatten().collect();
    let manifest = dir_out.join("manifest.csv");
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(&manifest)?;
    w.write_record(["source", "ratio", "output"])?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(&manifest, e))?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pitch_tracking::{cents, track};
    use crate::stimuli;

    fn median_f0(a: &AudioBuffer) -> f64 {
        let c = track(a).unwrap();
        let mut v: Vec<f64> = c
            .f0_hz
            .iter()
            .zip(c.voiced(0.5))
            .filter(|(_, v)| *v)
            .map(|(f, _)| *f)
            .collect();
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    }

    #[test]
    fn unit_ratio_is_plain_resample() {
        let x = stimuli::sine(200.0, 0.5, 0.2, 48000);
        assert_eq!(resample_augment(&x, 1.0).unwrap(), resample(&x, 16000).unwrap());
    }

    #[test]
    fn doubling_halves_duration_doubles_pitch() {
        let x = stimuli::sine(200.0, 0.5, 1.0, 48000);
        let y = resample_augment(&x, 2.0).unwrap();
        assert_eq!(y.len(), 8000);
        assert!(cents(median_f0(&y), 400.0).abs() < 5.0);
    }

    #[test]
    fn length_formula() {
        let x = stimuli::sine(200.0, 0.5, 0.3, 22050);
        for &(n, d) in &AUGMENT_RATIOS {
            let r = n as f64 / d as f64;
            let y = resample_augment(&x, r).unwrap();
            let inner = (x.len() as f64 / r).round();
            assert_eq!(y.len(), (inner * 16000.0 / 22050.0).round() as usize);
        }
    }

    #[test]
    fn ratio_and_inverse_compose() {
        let x = stimuli::sine(200.0, 0.5, 0.5, 16000);
        for &(n, d) in &AUGMENT_RATIOS {
            let r = n as f64 / d as f64;
            let y = resample_augment(&resample_augment(&x, r).unwrap(), 1.0 / r).unwrap();
            assert!((y.len() as i64 - x.len() as i64).abs() <= 2);
        }
    }

    #[test]
    fn corpus_outputs_and_manifest() {
        let dir_in = tempfile::tempdir().unwrap();
        let dir_out = tempfile::tempdir().unwrap();
        for (i, f0) in [120.0, 150.0, 180.0].iter().enumerate() {
            let v = stimuli::vowel(*f0, 0.3, &stimuli::VOWELS[i]);
            save_wav(&v, dir_in.path().join(format!("v{i}.wav"))).unwrap();
        }
        std::fs::write(dir_in.path().join("broken.wav"), b"nope").unwrap();
        let rows = augment_corpus(dir_in.path(), dir_out.path()).unwrap();
        assert_eq!(rows.len(), 27);
        let manifest = std::fs::read_to_string(dir_out.path().join("manifest.csv")).unwrap();
        assert_eq!(manifest.lines().count(), 28);
        assert!(dir_out.path().join("v1_r3-2.wav").exists());
        let wavs = std::fs::read_dir(dir_out.path())
            .unwrap()
            .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "wav"))
            .count();
        assert_eq!(wavs, 27);
    }

    #[test]
    fn empty_corpus() {
        let dir_in = tempfile::tempdir().unwrap();
        let dir_out = tempfile::tempdir().unwrap();
        assert!(augment_corpus(dir_in.path(), dir_out.path()).unwrap().is_empty());
        let manifest = std::fs::read_to_string(dir_out.path().join("manifest.csv")).unwrap();
        assert_eq!(manifest.trim(), "source,ratio,output");
    }
}
