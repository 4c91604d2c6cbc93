use rand::Rng;

use crate::error::{Error, Result};

pub const NUM_CODES: usize = 256;
/// Probability mass removed from every code before sampling.
pub const SAMPLING_THRESHOLD: f64 = 0.001;

/// Categorical distribution over the 256 mu-law excitation codes.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalDist256 {
    pub p: [f64; NUM_CODES],
}

impl CategoricalDist256 {
    pub fn uniform() -> Self {
        Self {
            p: [1.0 / NUM_CODES as f64; NUM_CODES],
        }
    }

    pub fn one_hot(code: u8) -> Self {
        let mut p = [0.0; NUM_CODES];
        p[code as usize] = 1.0;
        Self { p }
    }

    /// Numerically stable softmax.
    pub fn from_logits(logits: &[f64]) -> Self {
        debug_assert_eq!(logits.len(), NUM_CODES);
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut p = [0.0; NUM_CODES];
        let mut sum = 0.0;
        for (o, &l) in p.iter_mut().zip(logits) {
            *o = (l - m).exp();
            sum += *o;
        }
        for o in p.iter_mut() {
            *o /= sum;
        }
        Self { p }
    }

    pub fn is_valid(&self) -> bool {
        let mut sum = 0.0;
        for &v in &self.p {
            if !(v >= 0.0) || !v.is_finite() {
                return false;
            }
            sum += v;
        }
        (sum - 1.0).abs() <= 1e-6
    }

    pub fn validate(&self, frame: usize, sample: usize) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidDistribution { frame, sample })
        }
    }

    pub fn argmax(&self) -> u8 {
        let mut best = 0;
        for (i, &v) in self.p.iter().enumerate() {
            if v > self.p[best] {
                best = i;
            }
        }
        best as u8
    }

    /// `max(0, p - t)`, renormalized. `None` when nothing survives.
    pub fn thresholded(&self, t: f64) -> Option<[f64; NUM_CODES]> {
        let mut q = [0.0; NUM_CODES];
        let mut sum = 0.0;
        for (o, &v) in q.iter_mut().zip(&self.p) {
            *o = (v - t).max(0.0);
            sum += *o;
        }
        if sum <= 0.0 {
            return None;
        }
        for o in q.iter_mut() {
            *o /= sum;
        }
        Some(q)
    }
}

/// Draws a code after subtracting `t` from every probability and
/// renormalizing. Falls back to the argmax when no code exceeds `t`.
pub fn sample_excitation<R: Rng + ?Sized>(dist: &CategoricalDist256, rng: &mut R, t: f64) -> u8 {
    let Some(q) = dist.thresholded(t) else {
        return dist.argmax();
    };
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &v) in q.iter().enumerate() {
        if v > 0.0 {
            acc += v;
            last = i;
            if u < acc {
                return i as u8;
            }
        }
    }
    last as u8
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn softmax_valid_and_zero_logits_uniform() {
        let d = CategoricalDist256::from_logits(&[0.0; NUM_CODES]);
        assert!(d.p.iter().all(|&v| (v - 1.0 / 256.0).abs() < 1e-15));
        let logits: Vec<f64> = (0..NUM_CODES).map(|i| (i as f64 * 0.37).sin() * 40.0).collect();
        assert!(CategoricalDist256::from_logits(&logits).is_valid());
    }

    #[test]
    fn one_hot_always_drawn() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = CategoricalDist256::one_hot(42);
        assert!((0..1000).all(|_| sample_excitation(&d, &mut rng, SAMPLING_THRESHOLD) == 42));
    }

    #[test]
    fn below_threshold_code_never_drawn() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut d = CategoricalDist256 { p: [0.0; NUM_CODES] };
        d.p[7] = 0.0008;
        d.p[9] = 0.9992;
        assert!((0..100_000).all(|_| sample_excitation(&d, &mut rng, SAMPLING_THRESHOLD) == 9));
    }

    #[test]
    fn all_below_threshold_falls_back_to_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut d = CategoricalDist256 {
            p: [(1.0 - 0.0059) / 255.0; NUM_CODES],
        };
        d.p[5] = 0.0059;
        assert!(d.is_valid());
        assert_eq!(sample_excitation(&d, &mut rng, 0.01), 5);
    }

    #[test]
    fn invalid_distributions_rejected() {
        let mut d = CategoricalDist256::uniform();
        d.p[0] += 0.01;
        assert!(matches!(d.validate(3, 4), Err(Error::InvalidDistribution { frame: 3, sample: 4 })));
        d.p[0] = f64::NAN;
        assert!(!d.is_valid());
    }

    #[test]
    fn threshold_never_grows_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let logits: Vec<f64> = (0..NUM_CODES).map(|_| rng.random_range(-8.0..8.0)).collect();
            let d = CategoricalDist256::from_logits(&logits);
            if let Some(q) = d.thresholded(SAMPLING_THRESHOLD) {
                assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                for (a, b) in d.p.iter().zip(&q) {
                    assert!(*b == 0.0 || *a > SAMPLING_THRESHOLD);
                }
            }
        }
    }
}
