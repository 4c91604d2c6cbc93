use super::quantize::{bin_width_cents, PITCH_BINS};
use crate::error::{Error, Result};

pub type Emission = [f64; PITCH_BINS];

/// Max-product decoding over the 256 pitch bins. Transitions are weighted by
/// a Gaussian in the cent distance between bins.
#[derive(Debug, Clone, Copy)]
pub struct Viterbi {
    pub sigma_cents: f64,
}

impl Default for Viterbi {
    fn default() -> Self {
        Self { sigma_cents: 100.0 }
    }
}

impl Viterbi {
    /// Log transition weight indexed by bin distance.
    pub fn log_transition(&self) -> Vec<f64> {
        let w = bin_width_cents();
        (0..PITCH_BINS)
            .map(|d| {
                let z = d as f64 * w / self.sigma_cents;
                -0.5 * z * z
            })
            .collect()
    }

    pub fn decode(&self, emissions: &[Emission]) -> Result<Vec<u8>> {
        if emissions.is_empty() {
            return Ok(Vec::new());
        }
        for (i, e) in emissions.iter().enumerate() {
            if !e.iter().any(|&v| v > 0.0) || e.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::DegenerateEmission(i));
            }
        }
        let trans = self.log_transition();
        let log_e = |e: &Emission, j: usize| if e[j] > 0.0 { e[j].ln() } else { f64::NEG_INFINITY };

        let mut score: Vec<f64> = (0..PITCH_BINS).map(|j| log_e(&emissions[0], j)).collect();
        let mut back: Vec<[u8; PITCH_BINS]> = Vec::with_capacity(emissions.len());
        let mut next = vec![0.0; PITCH_BINS];
        for e in &emissions[1..] {
            let mut ptr = [0u8; PITCH_BINS];
            for j in 0..PITCH_BINS {
                let mut best = f64::NEG_INFINITY;
                let mut arg = 0usize;
                for (i, &s) in score.iter().enumerate() {
                    let v = s + trans[i.abs_diff(j)];
                    if v > best {
                        best = v;
                        arg = i;
                    }
                }
                next[j] = best + log_e(e, j);
                ptr[j] = arg as u8;
            }
            back.push(ptr);
            std::mem::swap(&mut score, &mut next);
        }

        let mut state = argmax(&score);
        let mut path = vec![state as u8; emissions.len()];
        for (t, ptr) in back.iter().enumerate().rev() {
            state = ptr[state] as usize;
            path[t] = state as u8;
        }
        Ok(path)
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive max-product search over the active bins of every frame.
    fn brute_force(v: &Viterbi, emissions: &[Emission]) -> (f64, Vec<u8>) {
        let trans = v.log_transition();
        let active: Vec<Vec<usize>> = emissions
            .iter()
            .map(|e| (0..PITCH_BINS).filter(|&j| e[j] > 0.0).collect())
            .collect();
        let mut best = (f64::NEG_INFINITY, Vec::new());
        let mut idx = vec![0usize; emissions.len()];
        loop {
            let path: Vec<usize> = idx.iter().zip(&active).map(|(&i, a)| a[i]).collect();
            let mut score = 0.0;
            for (t, &s) in path.iter().enumerate() {
                score += emissions[t][s].ln();
                if t > 0 {
                    score += trans[s.abs_diff(path[t - 1])];
                }
            }
            if score > best.0 {
                best = (score, path.iter().map(|&s| s as u8).collect());
            }
            // odometer increment
            let mut t = 0;
            loop {
                if t == idx.len() {
                    return best;
                }
                idx[t] += 1;
                if idx[t] < active[t].len() {
                    break;
                }
                idx[t] = 0;
                t += 1;
            }
        }
    }

    fn path_score(v: &Viterbi, emissions: &[Emission], path: &[u8]) -> f64 {
        let trans = v.log_transition();
        path.iter()
            .enumerate()
            .map(|(t, &s)| {
                let s = s as usize;
                let tr = if t > 0 {
                    trans[s.abs_diff(path[t - 1] as usize)]
                } else {
                    0.0
                };
                emissions[t][s].ln() + tr
            })
            .sum()
    }

    #[test]
    fn single_frame_is_argmax() {
        let mut e = [0.0; PITCH_BINS];
        e[10] = 0.3;
        e[99] = 0.9;
        e[200] = 0.5;
        assert_eq!(Viterbi::default().decode(&[e]).unwrap(), vec![99]);
    }

    #[test]
    fn constant_emissions_constant_path() {
        let mut e = [0.01; PITCH_BINS];
        e[120] = 1.0;
        let path = Viterbi::default().decode(&vec![e; 20]).unwrap();
        assert!(path.iter().all(|&b| b == 120));
    }

    #[test]
    fn degenerate_frame_rejected() {
        let mut e = [0.0; PITCH_BINS];
        e[5] = 1.0;
        let err = Viterbi::default()
            .decode(&[e, [0.0; PITCH_BINS]])
            .unwrap_err();
        assert!(matches!(err, Error::DegenerateEmission(1)));
    }

    #[test]
    fn octave_ambiguity_matches_enumeration() {
        // bins 74 (100 Hz), 147 (~200 Hz) and 0 (50 Hz); frame 1 prefers the
        // octave above but the neighbours pull it back
        let v = Viterbi::default();
        let mut frames = [[0.0; PITCH_BINS]; 3];
        let w = [[0.9, 0.5, 0.4], [0.6, 0.7, 0.3], [0.8, 0.6, 0.5]];
        for (f, weights) in frames.iter_mut().zip(w) {
            f[74] = weights[0];
            f[147] = weights[1];
            f[0] = weights[2];
        }
        let path = v.decode(&frames).unwrap();
        let (score, oracle) = brute_force(&v, &frames);
        assert_eq!(path, oracle);
        assert_eq!(path, vec![74, 74, 74]);
        assert!((path_score(&v, &frames, &path) - score).abs() < 1e-9);
    }

    #[test]
    fn random_small_instances_match_enumeration() {
        let v = Viterbi::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let frames = rng.random_range(1..=4);
            let bins = rng.random_range(1..=6);
            // nearby bins so transitions actually compete with emissions
            let active: Vec<usize> = (0..bins).map(|_| rng.random_range(60..90)).collect();
            let emissions: Vec<Emission> = (0..frames)
                .map(|_| {
                    let mut e = [0.0; PITCH_BINS];
                    for &b in &active {
                        e[b] = rng.random_range(0.05..1.0);
                    }
                    e
                })
                .collect();
            let path = v.decode(&emissions).unwrap();
            let (score, _) = brute_force(&v, &emissions);
            // compare scores: equal-score ties may pick different paths
            assert!((path_score(&v, &emissions, &path) - score).abs() < 1e-9);
        }
    }
}
