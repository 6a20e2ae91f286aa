mod common;

use common::{naive_windows, random_config, random_stream};
use dsa_core::evaluation::r_star_sum;
use dsa_core::windowing::{assign_window, fold_stream};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn fold_matches_naive_reaggregation() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xD5A);
    for _ in 0..300 {
        let config = random_config(&mut rng);
        let (att, scores) = random_stream(&mut rng, &config);
        let snaps = fold_stream(&att, &scores, &config).unwrap();
        let naive = naive_windows(&att, &scores, &config);
        assert_eq!(snaps.len(), naive.len());
        for (k, (s, n)) in snaps.iter().zip(&naive).enumerate() {
            assert_eq!(s.index, k as u64);
            assert_eq!(s.score_ratio, n.score_ratio);
            assert_eq!(s.mean_attention, n.mean_attention);
            assert_eq!(s.attention_level, n.level);
            assert_eq!(s.instant_performance, n.instant_performance);
        }
    }
}

proptest! {
    #[test]
    fn partition_and_telescoping(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let config = random_config(&mut rng);
        let (att, scores) = random_stream(&mut rng, &config);
        let snaps = fold_stream(&att, &scores, &config).unwrap();

        // Every event lands in exactly one window.
        let mut per_window = vec![0u64; snaps.len()];
        for e in &scores {
            per_window[assign_window(e.t_ms, config.window_ms) as usize] += e.points;
        }
        prop_assert_eq!(per_window.iter().sum::<u64>(), scores.iter().map(|e| e.points).sum::<u64>());

        for s in &snaps {
            prop_assert!((0.0..=1.0).contains(&s.score_ratio));
            if let Some(r) = s.instant_performance {
                prop_assert!((-1.0..=1.0).contains(&r));
            }
        }
        let first = snaps.first().unwrap().score_ratio;
        let last = snaps.last().unwrap().score_ratio;
        let sum_r: f64 = snaps.iter().filter_map(|s| s.instant_performance).sum();
        prop_assert!((sum_r - (last - first)).abs() <= 1e-12);
        prop_assert!((r_star_sum(&snaps, first) - last).abs() <= 1e-12);
    }
}
