//! Simplex and swap properties over random confidence vectors.

use proptest::prelude::*;
use purifier::purifier::{
    compute_swap_rate, round_half_up, swap_label, ConfidenceReformer, CvaeConfig, NoiseMode,
};
use purifier::ConfidenceVector;

fn simplex(k: std::ops::Range<usize>) -> impl Strategy<Value = ConfidenceVector> {
    prop::collection::vec(1e-6f64..1.0, k).prop_map(|v| {
        let s: f64 = v.iter().sum();
        ConfidenceVector::new(v.into_iter().map(|x| x / s).collect()).unwrap()
    })
}

fn sorted(c: &ConfidenceVector) -> Vec<f64> {
    let mut v = c.probs().to_vec();
    v.sort_by(f64::total_cmp);
    v
}

proptest! {
    #[test]
    fn swap_keeps_the_multiset_and_promotes_the_runner_up(c in simplex(2..30)) {
        let s = swap_label(&c).unwrap();
        prop_assert_eq!(sorted(&s), sorted(&c));
        let (first, second) = c.top_two().unwrap();
        prop_assert_eq!(s.probs()[first], c.probs()[second]);
        prop_assert_eq!(s.probs()[second], c.probs()[first]);
        for i in (0..c.len()).filter(|&i| i != first && i != second) {
            prop_assert_eq!(s.probs()[i], c.probs()[i]);
        }
        if c.probs()[first] > c.probs()[second] {
            prop_assert_eq!(s.argmax(), second);
            prop_assert_eq!(swap_label(&s).unwrap(), c);
        }
    }

    #[test]
    fn reformed_vectors_stay_on_the_simplex(c in simplex(5..6), salt in any::<u64>(), seed in any::<u64>()) {
        let r = ConfidenceReformer::new(&CvaeConfig::desk(5, seed)).unwrap();
        for mode in [NoiseMode::Zero, NoiseMode::Sample { salt }] {
            let out = r.reform(&c, mode).unwrap();
            let sum: f64 = out.probs().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-6);
            prop_assert!(out.probs().iter().all(|p| (0.0..=1.0).contains(p)));
            prop_assert_eq!(out.clone(), r.reform(&c, mode).unwrap());
        }
    }

    #[test]
    fn swap_rate_is_a_rate(train in 0.01f64..=1.0, test in 0.0f64..=1.0) {
        let p = compute_swap_rate(train, test).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        if test >= train {
            prop_assert_eq!(p, 0.0);
        } else {
            // swapping that share of members brings member accuracy down to test accuracy
            prop_assert!((train * (1.0 - p) - test).abs() < 1e-12);
        }
    }

    #[test]
    fn half_up_rounding(n in 0usize..100_000) {
        prop_assert_eq!(round_half_up(n as f64 + 0.5), n + 1);
        prop_assert_eq!(round_half_up(n as f64 + 0.49), n);
    }
}
