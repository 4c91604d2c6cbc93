//! Pitch accuracy metrics (voicing F1, RMS cents, gross pitch error), the
//! constant-ratio shift protocol and DTW pairing for prosody transfer.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::pitch_tracking::{cents, PitchContour, FMAX, FMIN, VOICING_THRESHOLD};
use crate::signal_io::AudioBuffer;
use crate::spectral_features::{FeatureFrame, NB_BANDS};

pub const GPE_THRESHOLD_CENTS: f64 = 50.0;
/// Shift ratios of the constant-ratio protocol.
pub const SHIFT_RATIOS: [f64; 3] = [0.71, 1.0, 1.41];
/// Longest run of frames a single DTW step may cover on either axis.
pub const DTW_MAX_SLOPE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PitchMetrics {
    pub f1: f64,
    pub rms_cents: f64,
    pub gpe: f64,
    pub n_frames: usize,
}

pub fn voiced_decision(contour: &PitchContour, threshold: f64) -> Vec<bool> {
    contour.voiced(threshold)
}

fn same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::LengthMismatch {
            expected: a,
            actual: b,
        });
    }
    Ok(())
}

/// `2TP / (2TP + FP + FN)`; 1 when neither mask has a voiced frame.
pub fn f1_voicing(pred: &[bool], target: &[bool]) -> Result<f64> {
    same_len(target.len(), pred.len())?;
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&p, &t) in pred.iter().zip(target) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            _ => {}
        }
    }
    if tp + fp + fneg == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * tp as f64 / (2 * tp + fp + fneg) as f64)
}

fn masked_errors(pred: &[f64], target: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    same_len(target.len(), pred.len())?;
    same_len(target.len(), mask.len())?;
    let errs: Vec<f64> = pred
        .iter()
        .zip(target)
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((&p, &t), _)| cents(p, t))
        .collect();
    if errs.is_empty() {
        return Err(Error::NoVoicedOverlap);
    }
    Ok(errs)
}

pub fn rms_cents(pred: &[f64], target: &[f64], mask: &[bool]) -> Result<f64> {
    let e = masked_errors(pred, target, mask)?;
    Ok((e.iter().map(|v| v * v).sum::<f64>() / e.len() as f64).sqrt())
}

/// Fraction of masked frames whose error exceeds `k` cents (strictly).
pub fn gpe(pred: &[f64], target: &[f64], mask: &[bool], k: f64) -> Result<f64> {
    let e = masked_errors(pred, target, mask)?;
    Ok(e.iter().filter(|v| v.abs() > k).count() as f64 / e.len() as f64)
}

/// All three metrics between two contours of equal length.
pub fn compare_contours(
    pred: &PitchContour,
    target: &PitchContour,
    threshold: f64,
) -> Result<PitchMetrics> {
    same_len(target.len(), pred.len())?;
    let pv = pred.voiced(threshold);
    let tv = target.voiced(threshold);
    let mask: Vec<bool> = pv.iter().zip(&tv).map(|(a, b)| *a && *b).collect();
    Ok(PitchMetrics {
        f1: f1_voicing(&pv, &tv)?,
        rms_cents: rms_cents(&pred.f0_hz, &target.f0_hz, &mask)?,
        gpe: gpe(&pred.f0_hz, &target.f0_hz, &mask, GPE_THRESHOLD_CENTS)?,
        n_frames: mask.iter().filter(|m| **m).count(),
    })
}

/// Source contour with f0 scaled by `ratio` and clamped to the pitch range.
pub fn shifted_target(source: &PitchContour, ratio: f64) -> PitchContour {
    PitchContour {
        f0_hz: source
            .f0_hz
            .iter()
            .map(|f| (f * ratio).clamp(FMIN, FMAX))
            .collect(),
        periodicity: source.periodicity.clone(),
    }
}

/// Runs `system(audio, ratio)` for each ratio and returns, per ratio, the
/// tracked output and the target (tracked source scaled by the ratio),
/// truncated to a common length. `tracker` maps audio to a contour.
pub fn shift_contours<S, T>(
    system: S,
    tracker: T,
    audio: &AudioBuffer,
    ratios: &[f64],
) -> Result<Vec<(f64, PitchContour, PitchContour)>>
where
    S: Fn(&AudioBuffer, f64) -> Result<AudioBuffer>,
    T: Fn(&AudioBuffer) -> Result<PitchContour>,
{
    let source = tracker(audio)?;
    ratios
        .iter()
        .map(|&r| {
            let tracked = tracker(&system(audio, r)?)?;
            let target = shifted_target(&source, r);
            if target.len() != tracked.len() {
                log::warn!("output has {} frames, source {}", tracked.len(), target.len());
            }
            let n = target.len().min(tracked.len());
            Ok((r, truncate(&tracked, n), truncate(&target, n)))
        })
        .collect()
}

/// Metrics of [`shift_contours`] per ratio.
pub fn evaluate_shift<S, T>(
    system: S,
    tracker: T,
    audio: &AudioBuffer,
    ratios: &[f64],
) -> Result<Vec<(f64, PitchMetrics)>>
where
    S: Fn(&AudioBuffer, f64) -> Result<AudioBuffer>,
    T: Fn(&AudioBuffer) -> Result<PitchContour>,
{
    shift_contours(system, tracker, audio, ratios)?
        .into_iter()
        .map(|(r, out, target)| Ok((r, compare_contours(&out, &target, VOICING_THRESHOLD)?)))
        .collect()
}

/// Metrics per ratio pooled over a corpus: tracked outputs and targets are
/// concatenated across utterances before comparison. Utterances run in
/// parallel.
pub fn evaluate_corpus<S, T>(
    system: S,
    tracker: T,
    corpus: &[AudioBuffer],
    ratios: &[f64],
) -> Result<Vec<(f64, PitchMetrics)>>
where
    S: Fn(&AudioBuffer, f64) -> Result<AudioBuffer> + Sync,
    T: Fn(&AudioBuffer) -> Result<PitchContour> + Sync,
{
    let runs: Vec<Vec<(f64, PitchContour, PitchContour)>> = corpus
        .par_iter()
        .map(|a| shift_contours(&system, &tracker, a, ratios))
        .collect::<Result<_>>()?;
    ratios
        .iter()
        .enumerate()
        .map(|(k, &r)| {
            let outs: Vec<PitchContour> = runs.iter().map(|run| run[k].1.clone()).collect();
            let targets: Vec<PitchContour> = runs.iter().map(|run| run[k].2.clone()).collect();
            Ok((r, compare_contours(&concat(&outs), &concat(&targets), VOICING_THRESHOLD)?))
        })
        .collect()
}

/// Concatenation of contours, for pooling metrics over utterances.
pub fn concat(contours: &[PitchContour]) -> PitchContour {
    PitchContour {
        f0_hz: contours.iter().flat_map(|c| c.f0_hz.iter().cloned()).collect(),
        periodicity: contours.iter().flat_map(|c| c.periodicity.iter().cloned()).collect(),
    }
}

pub fn truncate(c: &PitchContour, n: usize) -> PitchContour {
    PitchContour {
        f0_hz: c.f0_hz[..n].to_vec(),
        periodicity: c.periodicity[..n].to_vec(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub system: String,
    pub ratio: f64,
    pub f1: f64,
    pub rms_cents: f64,
    pub gpe: f64,
    pub n_frames: usize,
}

pub fn write_report(rows: &[ReportRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// DTW result: the warping path and, per source frame, the stretch ratio
/// and target f0 implied by it.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub path: Vec<(usize, usize)>,
    pub ratios: Vec<f64>,
    pub target_f0: Vec<f64>,
}

fn frame_distance(a: &[f64; NB_BANDS], b: &[f64; NB_BANDS]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Aligns source frames to target frames. Each step advances one axis by 1
/// and the other by 1..=4; its cost is the sum of distances over the cells
/// it covers.
pub fn align_pair(src: &[FeatureFrame], tgt: &[FeatureFrame], tgt_f0: &[f64]) -> Result<Alignment> {
    let (n, m) = (src.len(), tgt.len());
    if n == 0 || m == 0 {
        return Err(Error::Alignment("empty sequence".into()));
    }
    same_len(m, tgt_f0.len())?;
    let d = |i: usize, j: usize| frame_distance(&src[i].bfcc, &tgt[j].bfcc);
    // cost[i][j] for the prefix ending with source frame i matched through
    // target frame j; the origin sits at (-1, -1)
    let idx = |i: usize, j: usize| i * m + j;
    let mut cost = vec![f64::INFINITY; n * m];
    let mut back = vec![(0usize, 0usize); n * m];
    let steps: Vec<(usize, usize)> = (1..=DTW_MAX_SLOPE)
        .map(|k| (1, k))
        .chain((2..=DTW_MAX_SLOPE).map(|k| (k, 1)))
        .collect();
    for i in 0..n {
        for j in 0..m {
            let mut best = f64::INFINITY;
            let mut arg = (0, 0);
            for &(di, dj) in &steps {
                if di > i + 1 || dj > j + 1 {
                    continue;
                }
                let prev = if di == i + 1 && dj == j + 1 {
                    0.0
                } else if di <= i && dj <= j {
                    cost[idx(i - di, j - dj)]
                } else {
                    continue;
                };
                if !prev.is_finite() {
                    continue;
                }
                let local: f64 = if di == 1 {
                    (j + 1 - dj..=j).map(|jj| d(i, jj)).sum()
                } else {
                    (i + 1 - di..=i).map(|ii| d(ii, j)).sum()
                };
                if prev + local < best {
                    best = prev + local;
                    arg = (di, dj);
                }
            }
            cost[idx(i, j)] = best;
            back[idx(i, j)] = arg;
        }
    }
    if !cost[idx(n - 1, m - 1)].is_finite() {
        return Err(Error::Alignment(format!(
            "no path within slope {DTW_MAX_SLOPE} for {n} and {m} frames"
        )));
    }
    let mut steps_taken = Vec::new();
    let (mut i, mut j) = (n as isize - 1, m as isize - 1);
    while i >= 0 && j >= 0 {
        let (di, dj) = back[idx(i as usize, j as usize)];
        steps_taken.push((i as usize, j as usize, di, dj));
        i -= di as isize;
        j -= dj as isize;
    }
    steps_taken.reverse();
    let mut path = Vec::new();
    let mut ratios = vec![0.0; n];
    let mut target_f0 = vec![0.0; n];
    for (i, j, di, dj) in steps_taken {
        if di == 1 {
            ratios[i] = dj as f64;
            let cells = j + 1 - dj..=j;
            target_f0[i] = if dj == 1 {
                tgt_f0[j]
            } else {
                let log_mean =
                    cells.clone().map(|jj| tgt_f0[jj].max(FMIN).ln()).sum::<f64>() / dj as f64;
                log_mean.exp()
            };
            path.extend(cells.map(|jj| (i, jj)));
        } else {
            for ii in i + 1 - di..=i {
                ratios[ii] = 1.0 / di as f64;
                target_f0[ii] = tgt_f0[j];
                path.push((ii, j));
            }
        }
    }
    Ok(Alignment {
        path,
        ratios,
        target_f0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn shifted(base: &[f64], c: &[f64]) -> Vec<f64> {
        base.iter().zip(c).map(|(b, c)| b * 2f64.powf(c / 1200.0)).collect()
    }

    #[test]
    fn voicing_tie_is_voiced() {
        let c = PitchContour::new(vec![100.0; 3], vec![0.9, 0.1, 0.5]).unwrap();
        assert_eq!(voiced_decision(&c, 0.5), vec![true, false, true]);
    }

    #[test]
    fn f1_cases() {
        let t = [true, true, true, false, false];
        assert_eq!(f1_voicing(&t, &t).unwrap(), 1.0);
        assert_eq!(f1_voicing(&[false; 5], &t).unwrap(), 0.0);
        assert_eq!(f1_voicing(&[false; 4], &[false; 4]).unwrap(), 1.0);
        let pred = [true, true, false, true];
        let target = [true, true, true, false];
        // TP 2, FP 1, FN 1
        assert_eq!(f1_voicing(&pred, &target).unwrap(), 4.0 / 6.0);
        assert_eq!(f1_voicing(&[true, true, true], &[true, true, false]).unwrap(), 0.8);
        assert!(f1_voicing(&pred, &target[..3]).is_err());
    }

    #[test]
    fn rms_cases() {
        let base = [100.0, 200.0, 300.0];
        let m = [true; 3];
        assert_eq!(rms_cents(&base, &base, &m).unwrap(), 0.0);
        let up = shifted(&base, &[50.0; 3]);
        assert!((rms_cents(&up, &base, &m).unwrap() - 50.0).abs() < 1e-9);
        let e = shifted(&base[..2], &[30.0, 40.0]);
        let r = rms_cents(&e, &base[..2], &[true, true]).unwrap();
        assert!((r - (2500.0f64 / 2.0).sqrt()).abs() < 1e-9);
        assert!(matches!(rms_cents(&base, &base, &[false; 3]), Err(Error::NoVoicedOverlap)));
    }

    #[test]
    fn gpe_cases() {
        let base = [100.0, 150.0, 200.0, 250.0];
        let m = [true; 4];
        assert_eq!(gpe(&shifted(&base, &[10.0; 4]), &base, &m, 50.0).unwrap(), 0.0);
        let p = shifted(&base, &[10.0, 60.0, 70.0, 20.0]);
        assert_eq!(gpe(&p, &base, &m, 50.0).unwrap(), 0.5);
        // an error equal to k is not gross
        let (p, t) = (100.0 * 2f64.powf(50.0 / 1200.0), 100.0);
        let k = cents(p, t);
        assert!((k - 50.0).abs() < 1e-9);
        assert_eq!(gpe(&[p], &[t], &[true], k).unwrap(), 0.0);
        assert_eq!(gpe(&[p], &[t], &[true], k - 1e-9).unwrap(), 1.0);
    }

    #[test]
    fn metrics_symmetric_and_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let n = rng.random_range(1..40);
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(60.0..500.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(60.0..500.0)).collect();
            let m: Vec<bool> = (0..n).map(|i| i == 0 || rng.random_bool(0.7)).collect();
            let r1 = rms_cents(&a, &b, &m).unwrap();
            assert!((r1 - rms_cents(&b, &a, &m).unwrap()).abs() < 1e-9);
            assert_eq!(gpe(&a, &b, &m, 50.0).unwrap(), gpe(&b, &a, &m, 50.0).unwrap());
            let rev = |v: &[f64]| v.iter().rev().cloned().collect::<Vec<_>>();
            let mr: Vec<bool> = m.iter().rev().cloned().collect();
            assert!((r1 - rms_cents(&rev(&a), &rev(&b), &mr).unwrap()).abs() < 1e-9);
            let f = f1_voicing(&m, &mr).unwrap();
            assert!((0.0..=1.0).contains(&f));
        }
    }

    #[test]
    fn silence_has_no_overlap() {
        let audio = AudioBuffer::silence(8000, 16000);
        let r = evaluate_shift(
            |a, _| Ok(a.clone()),
            crate::pitch_tracking::track,
            &audio,
            &[1.0],
        );
        assert!(matches!(r, Err(Error::NoVoicedOverlap)));
    }

    fn feats(values: &[f64]) -> Vec<FeatureFrame> {
        values
            .iter()
            .map(|&v| {
                let mut bfcc = [0.0; NB_BANDS];
                bfcc[0] = v;
                bfcc[1] = (v * 0.7).sin();
                FeatureFrame {
                    bfcc,
                    pitch_bin: 0,
                    periodicity: 0.0,
                }
            })
            .collect()
    }

    #[test]
    fn dtw_identity_is_diagonal() {
        let v: Vec<f64> = (0..30).map(|i| (i as f64 * 0.4).sin() * 3.0 + i as f64 * 0.1).collect();
        let f = feats(&v);
        let f0: Vec<f64> = (0..30).map(|i| 100.0 + i as f64).collect();
        let a = align_pair(&f, &f, &f0).unwrap();
        assert_eq!(a.path, (0..30).map(|i| (i, i)).collect::<Vec<_>>());
        assert!(a.ratios.iter().all(|&r| r == 1.0));
        assert_eq!(a.target_f0, f0);
    }

    #[test]
    fn dtw_duplicated_target_doubles() {
        let v: Vec<f64> = (0..25).map(|i| i as f64).collect();
        let dup: Vec<f64> = v.iter().flat_map(|&x| [x, x]).collect();
        let f0 = vec![120.0; dup.len()];
        let a = align_pair(&feats(&v), &feats(&dup), &f0).unwrap();
        assert!(a.ratios.iter().all(|&r| r == 2.0), "{:?}", a.ratios);
        assert_eq!(a.ratios.iter().sum::<f64>(), dup.len() as f64);
        assert!(a.target_f0.iter().all(|&f| (f - 120.0).abs() < 1e-9));
    }

    #[test]
    fn dtw_path_monotone_and_complete() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..30 {
            let n: usize = rng.random_range(1..30);
            let m = rng.random_range(n.div_ceil(4).max(1)..=(4 * n).min(60));
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let b: Vec<f64> = (0..m).map(|_| rng.random_range(-3.0..3.0)).collect();
            let al = align_pair(&feats(&a), &feats(&b), &vec![100.0; m]).unwrap();
            assert_eq!(al.path.first(), Some(&(0, 0)));
            assert_eq!(al.path.last(), Some(&(n - 1, m - 1)));
            for w in al.path.windows(2) {
                assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1 && w[1] != w[0]);
            }
            assert!((al.ratios.iter().sum::<f64>() - m as f64).abs() < 1e-9);
        }
        assert!(align_pair(&feats(&[1.0]), &feats(&[1.0; 5]), &[100.0; 5]).is_err());
        assert!(align_pair(&[], &feats(&[1.0]), &[100.0]).is_err());
    }
}
