use clpc::evaluate::f1_voicing;
use clpc::lpc::{mulaw_decode, mulaw_encode};
use clpc::neural_excitation::{sample_excitation, CategoricalDist256, SAMPLING_THRESHOLD};
use clpc::pitch_tracking::{
    cents, dequantize_pitch, gate_periodicity, quantize_pitch, PitchContour, FMAX, FMIN, GATE_DB,
};
use clpc::signal_io::resample_by_ratio;
use clpc::spectral_features::{FeatureFrame, NB_BANDS};
use clpc::synthesis::constant_stretch_script;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn frames(n: usize) -> (Vec<FeatureFrame>, PitchContour) {
    let feats = vec![
        FeatureFrame {
            bfcc: [0.0; NB_BANDS],
            pitch_bin: 100,
            periodicity: 0.5,
        };
        n
    ];
    let contour = PitchContour::new(vec![150.0; n], vec![0.5; n]).unwrap();
    (feats, contour)
}

proptest! {
    #[test]
    fn mulaw_is_monotone(a in -1.5f64..1.5, b in -1.5f64..1.5) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(mulaw_encode(lo) <= mulaw_encode(hi));
    }

    #[test]
    fn mulaw_code_roundtrip(c in any::<u8>()) {
        prop_assert_eq!(mulaw_encode(mulaw_decode(c)), c);
    }

    #[test]
    fn pitch_roundtrip_within_half_bin(f in FMIN..FMAX) {
        prop_assert!(cents(dequantize_pitch(quantize_pitch(f)), f).abs() <= 8.15);
    }

    #[test]
    fn pitch_quantizer_is_monotone(a in FMIN..FMAX, b in FMIN..FMAX) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(quantize_pitch(lo) <= quantize_pitch(hi));
    }

    #[test]
    fn gate_is_idempotent(
        per in prop::collection::vec(0.0f64..1.0, 1..50),
        offsets in prop::collection::vec(-40.0f64..40.0, 50),
    ) {
        let n = per.len();
        let contour = PitchContour::new(vec![200.0; n], per).unwrap();
        let loud: Vec<f64> = offsets[..n].iter().map(|o| GATE_DB + o).collect();
        let once = gate_periodicity(&contour, &loud).unwrap();
        let twice = gate_periodicity(&once, &loud).unwrap();
        prop_assert_eq!(&once, &twice);
        for (p, l) in once.periodicity.iter().zip(&loud) {
            prop_assert!(*l >= GATE_DB || *p == 0.0);
        }
    }

    #[test]
    fn stretch_length_is_exact(n in 1usize..300, ratio in 0.25f64..4.0) {
        let (feats, contour) = frames(n);
        let script = constant_stretch_script(&feats, &contour, ratio).unwrap();
        let expected = (ratio * n as f64 * 160.0).round() as usize;
        prop_assert_eq!(script.output_len(), expected);
        prop_assert_eq!(script.hops().iter().sum::<usize>(), expected);
    }

    #[test]
    fn stretches_compose(n in 1usize..200, a in 0.5f64..2.0, b in 0.5f64..2.0) {
        let (feats, contour) = frames(n);
        let base = constant_stretch_script(&feats, &contour, 1.0).unwrap();
        let two = base.stretched(a).unwrap().stretched(b).unwrap();
        let one = base.stretched(a * b).unwrap();
        let (x, y) = (two.output_len() as i64, one.output_len() as i64);
        prop_assert!((x - y).abs() <= 1, "{} vs {}", x, y);
    }

    #[test]
    fn sampling_stays_in_thresholded_support(
        logits in prop::collection::vec(-8.0f64..8.0, 256),
        seed in any::<u64>(),
    ) {
        let dist = CategoricalDist256::from_logits(&logits);
        prop_assert!(dist.is_valid());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let any_above = dist.p.iter().any(|&p| p > SAMPLING_THRESHOLD);
        for _ in 0..64 {
            let c = sample_excitation(&dist, &mut rng, SAMPLING_THRESHOLD) as usize;
            if any_above {
                prop_assert!(dist.p[c] > SAMPLING_THRESHOLD);
            } else {
                prop_assert_eq!(c, dist.argmax() as usize);
            }
        }
    }

    #[test]
    fn f1_is_bounded_and_symmetric(
        pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 0..100),
    ) {
        let (a, b): (Vec<bool>, Vec<bool>) = pairs.into_iter().unzip();
        let f = f1_voicing(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert_eq!(f, f1_voicing(&b, &a).unwrap());
    }

    #[test]
    fn resampled_length_is_rounded(n in 1usize..4000, ratio in 0.5f64..2.0) {
        let x = vec![0.1; n];
        let y = resample_by_ratio(&x, ratio).unwrap();
        prop_assert_eq!(y.len(), (n as f64 * ratio).round() as usize);
    }
}
