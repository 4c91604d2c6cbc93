//! TD-PSOLA baseline: pitch marks by dynamic programming over waveform
//! peaks, then pitch-synchronous overlap-add under per-frame pitch and time
//! maps.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pitch_tracking::{PitchContour, FRAME_HOP, VOICING_THRESHOLD};
use crate::signal_io::{limit, AudioBuffer, SAMPLE_RATE};

/// Allowed deviation of a voiced mark gap from the local period.
const GAP_TOLERANCE: (f64, f64) = (0.7, 1.3);
/// Weight of the normalized peak amplitude against squared period deviation.
const PEAK_WEIGHT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PitchMarks {
    pub positions: Vec<usize>,
    pub voiced: Vec<bool>,
}

impl PitchMarks {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            sample: usize,
            voiced: bool,
        }
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        for (&sample, &voiced) in self.positions.iter().zip(&self.voiced) {
            w.serialize(Row { sample, voiced })?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

fn frame_of(sample: usize, frames: usize) -> usize {
    (sample / FRAME_HOP).min(frames.saturating_sub(1))
}

/// Voiced sample ranges `[start, end)` on the frame grid.
fn voiced_regions(contour: &PitchContour, len: usize) -> Vec<(usize, usize)> {
    let voiced = contour.voiced(VOICING_THRESHOLD);
    let mut out = Vec::new();
    let mut f = 0;
    while f < voiced.len() {
        if !voiced[f] {
            f += 1;
            continue;
        }
        let start = f;
        while f < voiced.len() && voiced[f] {
            f += 1;
        }
        let (a, b) = ((start * FRAME_HOP).min(len), (f * FRAME_HOP).min(len));
        if b > a {
            out.push((a, b));
        }
    }
    out
}

fn period_at(contour: &PitchContour, sample: usize) -> f64 {
    SAMPLE_RATE as f64 / contour.f0_hz[frame_of(sample, contour.len())]
}

/// DP over local maxima in `[a, b)`: consecutive gaps within the tolerance
/// of the local period, cost `(gap/T - 1)^2 - w * x/peak`.
fn place_voiced(x: &[f64], a: usize, b: usize, contour: &PitchContour) -> Vec<usize> {
    let peak = x[a..b].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cand: Vec<usize> = (a..b)
        .filter(|&t| {
            x[t] > 0.0
                && (t == 0 || x[t] >= x[t - 1])
                && (t + 1 >= x.len() || x[t] > x[t + 1])
        })
        .collect();
    if cand.is_empty() || peak == 0.0 {
        return uniform_voiced(a, b, contour);
    }
    let amp = |t: usize| PEAK_WEIGHT * x[t] / peak;
    let n = cand.len();
    let mut cost = vec![f64::INFINITY; n];
    let mut prev = vec![usize::MAX; n];
    let mut lo = 0;
    for j in 0..n {
        let t = cand[j];
        let period = period_at(contour, t);
        if (t - a) as f64 <= GAP_TOLERANCE.1 * period {
            cost[j] = -amp(t);
        }
        while lo < j && ((t - cand[lo]) as f64) > GAP_TOLERANCE.1 * period {
            lo += 1;
        }
        for i in lo..j {
            let gap = (t - cand[i]) as f64;
            if gap < GAP_TOLERANCE.0 * period || !cost[i].is_finite() {
                continue;
            }
            let c = cost[i] + (gap / period - 1.0).powi(2) - amp(t);
            if c < cost[j] {
                cost[j] = c;
                prev[j] = i;
            }
        }
    }
    let end = (0..n)
        .filter(|&j| ((b - cand[j]) as f64) <= GAP_TOLERANCE.1 * period_at(contour, cand[j]))
        .filter(|&j| cost[j].is_finite())
        .min_by(|&i, &j| cost[i].total_cmp(&cost[j]));
    let Some(mut j) = end else {
        return uniform_voiced(a, b, contour);
    };
    let mut marks = vec![cand[j]];
    while prev[j] != usize::MAX {
        j = prev[j];
        marks.push(cand[j]);
    }
    marks.reverse();
    marks
}

fn uniform_voiced(a: usize, b: usize, contour: &PitchContour) -> Vec<usize> {
    let mut marks = Vec::new();
    let mut t = a as f64;
    while (t as usize) < b {
        marks.push(t as usize);
        t += period_at(contour, t as usize);
    }
    marks
}

/// Pitch marks: DP-placed peaks in voiced regions, every 160 samples
/// elsewhere.
pub fn detect_marks(audio: &AudioBuffer, contour: &PitchContour) -> Result<PitchMarks> {
    let x = &audio.samples;
    let frames = crate::pitch_tracking::frame_count(x.len());
    if contour.len() != frames {
        return Err(Error::LengthMismatch {
            expected: frames,
            actual: contour.len(),
        });
    }
    let mut marks = PitchMarks::default();
    let mut cursor = 0usize;
    let unvoiced_until = |marks: &mut PitchMarks, from: usize, to: usize| {
        let mut t = from;
        while t < to {
            marks.positions.push(t);
            marks.voiced.push(false);
            t += FRAME_HOP;
        }
    };
    for (a, b) in voiced_regions(contour, x.len()) {
        unvoiced_until(&mut marks, cursor, a);
        for t in place_voiced(x, a, b, contour) {
            if marks.positions.last().is_none_or(|&l| t > l) {
                marks.positions.push(t);
                marks.voiced.push(true);
            }
        }
        cursor = marks.positions.last().map_or(b, |&l| (l + 1).max(b));
    }
    unvoiced_until(&mut marks, cursor, x.len());
    Ok(marks)
}

/// Piecewise-linear map between input and output time given per-frame
/// stretch ratios, with frame boundaries rounded as in synthesis scripts.
struct TimeMap {
    input: Vec<f64>,
    output: Vec<f64>,
}

impl TimeMap {
    fn new(ratios: &[f64], len: usize) -> Self {
        let mut input = vec![0.0];
        let mut output = vec![0.0];
        let mut pos = 0.0;
        for (f, r) in ratios.iter().enumerate() {
            let end_in = ((f + 1) * FRAME_HOP).min(len) as f64;
            let span = end_in - (f * FRAME_HOP) as f64;
            pos += r * span;
            input.push(end_in);
            output.push(pos.round());
        }
        Self { input, output }
    }

    fn out_len(&self) -> usize {
        *self.output.last().unwrap() as usize
    }

    fn interp(xs: &[f64], ys: &[f64], v: f64) -> f64 {
        let i = xs.partition_point(|&x| x <= v).clamp(1, xs.len() - 1);
        let (x0, x1) = (xs[i - 1], xs[i]);
        if x1 == x0 {
            return ys[i];
        }
        ys[i - 1] + (v - x0) / (x1 - x0) * (ys[i] - ys[i - 1])
    }

    fn to_input(&self, t_out: f64) -> f64 {
        Self::interp(&self.output, &self.input, t_out)
    }

    fn to_output(&self, t_in: f64) -> f64 {
        Self::interp(&self.input, &self.output, t_in)
    }
}

/// Overlap-adds two-period Hann segments around analysis marks at synthesis
/// marks spaced by the analysis period divided by the pitch ratio
/// `target / source` (voiced) or by the original spacing (unvoiced).
pub fn psola_modify(
    audio: &AudioBuffer,
    marks: &PitchMarks,
    contour: &PitchContour,
    pitch_map: &[f64],
    time_map: &[f64],
) -> Result<AudioBuffer> {
    let frames = contour.len();
    for len in [pitch_map.len(), time_map.len()] {
        if len != frames {
            return Err(Error::LengthMismatch {
                expected: frames,
                actual: len,
            });
        }
    }
    if time_map.iter().any(|r| !(*r > 0.0)) || pitch_map.iter().any(|f| !(*f > 0.0)) {
        return Err(Error::InvalidArgument("maps must be positive".into()));
    }
    let x = &audio.samples;
    let tm = TimeMap::new(time_map, x.len());
    let out_len = tm.out_len();
    let mut y = vec![0.0; out_len];
    let mut wsum = vec![0.0; out_len];
    if marks.is_empty() || x.is_empty() {
        return AudioBuffer::new(y, audio.sample_rate);
    }
    let pos = &marks.positions;
    let spacing = |k: usize| -> (usize, usize) {
        let left = if k > 0 { pos[k] - pos[k - 1] } else { pos.get(1).map_or(FRAME_HOP, |n| n - pos[0]) };
        let right = if k + 1 < pos.len() { pos[k + 1] - pos[k] } else { left };
        (left, right)
    };
    let mut tau = tm.to_output(pos[0] as f64);
    let mut k = 0usize;
    while tau < out_len as f64 {
        let t_in = tm.to_input(tau);
        // nearest analysis mark, scanning forward only
        while k + 1 < pos.len() && (pos[k + 1] as f64 - t_in).abs() <= (pos[k] as f64 - t_in).abs() {
            k += 1;
        }
        let (left, right) = spacing(k);
        let centre = tau.round() as isize;
        for o in -(left as isize)..=(right as isize) {
            let src = pos[k] as isize + o;
            let dst = centre + o;
            if src < 0 || src >= x.len() as isize || dst < 0 || dst >= out_len as isize {
                continue;
            }
            let w = if o < 0 {
                0.5 + 0.5 * (std::f64::consts::PI * o as f64 / left as f64).cos()
            } else if right > 0 {
                0.5 + 0.5 * (std::f64::consts::PI * o as f64 / right as f64).cos()
            } else {
                1.0
            };
            y[dst as usize] += w * x[src as usize];
            wsum[dst as usize] += w;
        }
        let f = frame_of(pos[k], frames);
        let step = if marks.voiced[k] {
            let beta = pitch_map[f] / contour.f0_hz[f];
            right.max(1) as f64 / beta
        } else {
            right.max(1) as f64
        };
        tau += step.max(1.0);
    }
    for (v, w) in y.iter_mut().zip(&wsum) {
        *v /= w.max(1.0);
    }
    Ok(limit(&AudioBuffer::new(y, audio.sample_rate)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pitch_tracking::{cents, track};
    use crate::stimuli;

    fn contour(f0: f64, p: f64, frames: usize) -> PitchContour {
        PitchContour::new(vec![f0; frames], vec![p; frames]).unwrap()
    }

    #[test]
    fn pulse_train_marks_on_pulses() {
        let x = stimuli::pulse_train(160, 37, 8000);
        let audio = AudioBuffer::new(x, SAMPLE_RATE).unwrap();
        let m = detect_marks(&audio, &contour(100.0, 1.0, 50)).unwrap();
        let expected: Vec<usize> = (0..50).map(|i| 37 + 160 * i).filter(|&t| t < 8000).collect();
        assert_eq!(m.positions, expected);
        assert!(m.voiced.iter().all(|&v| v));
    }

    #[test]
    fn silence_uniform_marks() {
        let audio = AudioBuffer::silence(1000, SAMPLE_RATE);
        let m = detect_marks(&audio, &contour(100.0, 0.0, 7)).unwrap();
        assert_eq!(m.positions, vec![0, 160, 320, 480, 640, 800, 960]);
        assert!(m.voiced.iter().all(|&v| !v));
    }

    #[test]
    fn chirp_spacing_follows_period() {
        // pulses at the instantaneous period of a 100 -> 200 Hz linear chirp
        let n = 16000;
        let f0 = |t: f64| 100.0 + 100.0 * t / n as f64;
        let mut pulses = vec![0.0; n];
        let mut truth = Vec::new();
        let mut phase = 0.0;
        for t in 0..n {
            phase += f0(t as f64) / SAMPLE_RATE as f64;
            if phase >= 1.0 {
                phase -= 1.0;
                pulses[t] = 1.0;
                truth.push(t);
            }
        }
        let audio = AudioBuffer::new(pulses, SAMPLE_RATE).unwrap();
        let frames = crate::pitch_tracking::frame_count(n);
        let c = PitchContour::new(
            (0..frames).map(|i| f0((i * 160 + 80) as f64)).collect(),
            vec![1.0; frames],
        )
        .unwrap();
        let m = detect_marks(&audio, &c).unwrap();
        assert_eq!(m.positions, truth);
        // each gap within 2 samples of the period at its midpoint, and the
        // sequence non-increasing up to that jitter
        let mut last = i64::MAX / 2;
        for w in m.positions.windows(2) {
            let gap = (w[1] - w[0]) as i64;
            let period = SAMPLE_RATE as f64 / f0((w[0] + w[1]) as f64 / 2.0);
            assert!((gap as f64 - period).abs() <= 2.0, "gap {gap} vs {period}");
            assert!(gap <= last + 2);
            last = last.min(gap);
        }
        assert!((last - 80).abs() <= 2);
    }

    #[test]
    fn identity_reconstruction_snr() {
        let v = stimuli::vowel(110.0, 0.8, &stimuli::VOWELS[0]);
        let c = track(&v).unwrap();
        let m = detect_marks(&v, &c).unwrap();
        let out = psola_modify(&v, &m, &c, &c.f0_hz, &vec![1.0; c.len()]).unwrap();
        assert_eq!(out.len(), v.len());
        let sig: f64 = v.samples.iter().map(|s| s * s).sum();
        let err: f64 = v.samples.iter().zip(&out.samples).map(|(a, b)| (a - b).powi(2)).sum();
        let snr = 10.0 * (sig / err).log10();
        assert!(snr > 20.0, "snr {snr}");
    }

    #[test]
    fn pitch_raise_hits_target() {
        let v = stimuli::vowel(110.0, 0.8, &stimuli::VOWELS[2]);
        let c = track(&v).unwrap();
        let m = detect_marks(&v, &c).unwrap();
        let target: Vec<f64> = c.f0_hz.iter().map(|f| f * 1.41).collect();
        let out = psola_modify(&v, &m, &c, &target, &vec![1.0; c.len()]).unwrap();
        assert!(out.peak() <= 1.2 * v.peak());
        let t = track(&out).unwrap();
        let mut errs: Vec<f64> = t
            .voiced(0.5)
            .iter()
            .zip(&t.f0_hz)
            .filter(|(v, _)| **v)
            .map(|(_, f)| cents(*f, 155.1))
            .collect();
        assert!(errs.len() > 40);
        errs.sort_by(f64::total_cmp);
        let median = errs[errs.len() / 2];
        assert!(median.abs() < 30.0, "median {median}");
    }

    #[test]
    fn time_stretch_duration() {
        let v = stimuli::vowel(125.0, 0.5, &stimuli::VOWELS[3]);
        let c = track(&v).unwrap();
        let m = detect_marks(&v, &c).unwrap();
        let out = psola_modify(&v, &m, &c, &c.f0_hz, &vec![2.0; c.len()]).unwrap();
        assert!((out.len() as i64 - 2 * v.len() as i64).abs() <= 128);
        let marks_in_order = m.positions.windows(2).all(|w| w[1] > w[0]);
        assert!(marks_in_order);
    }

    #[test]
    fn unvoiced_ignores_pitch_map() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(3);
        let noise: Vec<f64> = (0..8000).map(|_| rand::Rng::random_range(&mut rng, -0.3..0.3)).collect();
        let audio = AudioBuffer::new(noise, SAMPLE_RATE).unwrap();
        let c = contour(100.0, 0.0, 50);
        let m = detect_marks(&audio, &c).unwrap();
        let a = psola_modify(&audio, &m, &c, &[100.0; 50], &[1.3; 50]).unwrap();
        let b = psola_modify(&audio, &m, &c, &[300.0; 50], &[1.3; 50]).unwrap();
        assert_eq!(a, b);
        let same = psola_modify(&audio, &m, &c, &[100.0; 50], &[1.0; 50]).unwrap();
        for (x, y) in audio.samples[160..7840].iter().zip(&same.samples[160..7840]) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}
