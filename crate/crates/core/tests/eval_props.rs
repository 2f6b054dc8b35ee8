use greenlite_core::eval::{
    class_weights, class_weights_exact, classification_metrics, parse_metrics_csv, render_metrics_csv, undersample,
    MetricsRow,
};
use num_rational::Ratio;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn classification_hand_fixture() {
    let m = classification_metrics(&[1, 1, 0], &[1, 0, 0], 2).unwrap();
    assert!((m.accuracy - 2.0 / 3.0).abs() <= 1e-9);
    assert!((m.macro_precision - 0.75).abs() <= 1e-9);
    assert!((m.macro_recall - 0.75).abs() <= 1e-9);
    assert!((m.macro_f1 - 2.0 / 3.0).abs() <= 1e-9);
    assert!(classification_metrics(&[0], &[], 2).is_err());
    assert!(classification_metrics(&[2], &[0], 2).is_err());
}

proptest! {
    #[test]
    fn classification_ignores_sample_order(
        pairs in prop::collection::vec((0usize..5, 0usize..5), 1..80),
        seed in any::<u64>(),
    ) {
        let (p, l): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
        let a = classification_metrics(&p, &l, 5).unwrap();
        let mut shuffled = pairs.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let (p2, l2): (Vec<usize>, Vec<usize>) = shuffled.into_iter().unzip();
        prop_assert_eq!(a.clone(), classification_metrics(&p2, &l2, 5).unwrap());

        // accuracy = sum over classes of recall * prevalence
        let n = l.len() as f64;
        let mut acc = 0.0;
        for c in 0..5 {
            let support = l.iter().filter(|&&t| t == c).count();
            if support > 0 {
                let hit = p.iter().zip(&l).filter(|(&pp, &t)| t == c && pp == c).count();
                acc += hit as f64 / support as f64 * (support as f64 / n);
            }
        }
        prop_assert!((a.accuracy - acc).abs() <= 1e-12);
        prop_assert_eq!(a.confusion.total(), l.len() as u64);
    }

    #[test]
    fn class_weights_reweight_to_the_total(counts in prop::collection::vec(1u64..100_000, 1..12)) {
        let n: u64 = counts.iter().sum();
        let exact = class_weights_exact(&counts).unwrap();
        let sum: Ratio<u128> = exact.iter().zip(&counts).map(|(w, &c)| w * Ratio::from_integer(c as u128)).sum();
        prop_assert_eq!(sum, Ratio::from_integer(n as u128));
        let approx = class_weights(&counts).unwrap();
        let s: f64 = approx.iter().zip(&counts).map(|(w, &c)| w * c as f64).sum();
        prop_assert!((s - n as f64).abs() <= 1e-12 * n as f64);
        for (w, e) in approx.iter().zip(&exact) {
            prop_assert!((w - *e.numer() as f64 / *e.denom() as f64).abs() <= 1e-12 * w);
        }
    }

    #[test]
    fn undersample_equalizes(labels in prop::collection::vec(0usize..6, 1..300), seed in any::<u64>()) {
        let items: Vec<(usize, usize)> = labels.iter().copied().enumerate().collect();
        let out = undersample(&items, |x| x.1, seed);
        prop_assert_eq!(&out, &undersample(&items, |x| x.1, seed));
        let present: Vec<usize> = (0..6).filter(|c| labels.contains(c)).collect();
        let min = present.iter().map(|c| labels.iter().filter(|l| *l == c).count()).min().unwrap();
        for c in &present {
            prop_assert_eq!(out.iter().filter(|x| x.1 == *c).count(), min);
        }
        prop_assert!(out.windows(2).all(|w| w[0].0 < w[1].0));
    }
}

#[test]
fn undersample_depends_on_seed() {
    let items: Vec<(usize, usize)> = (0..400).map(|i| (i, if i % 4 == 0 { 0 } else { 1 })).collect();
    let base = undersample(&items, |x| x.1, 0);
    let differing = (1..=100).filter(|&s| undersample(&items, |x| x.1, s) != base).count();
    assert!(differing >= 99, "{differing}");
}

#[test]
fn metrics_csv_round_trip() {
    let rows = vec![
        MetricsRow { model: "YOLOv8n-CBAM".into(), map50: Some(0.8123), size_mb: Some(6.1), qsize_mb: Some(3.5), ..Default::default() },
        MetricsRow { model: "cls".into(), acc: Some(0.9), precision: Some(0.85), recall: Some(0.8), f1: Some(0.82), ..Default::default() },
    ];
    let text = render_metrics_csv(&rows);
    assert!(text.starts_with("model,acc,precision,recall,f1,map50,size_mb,qsize_mb\n"));
    assert!(text.contains("YOLOv8n-CBAM,,,,,0.8123,6.1000,3.5000"));
    assert_eq!(parse_metrics_csv(&text).unwrap(), rows);
}
