mod common;

use common::{random_config, random_stream};
use dsa_core::evaluation::{paired_stats, r_star_sum, PairedReport};
use dsa_core::windowing::fold_stream;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// t via raw sums, an algebraically different route from mean/sd.
fn t_from_sums(on: &[f64], off: &[f64]) -> f64 {
    let n = on.len() as f64;
    let d: Vec<f64> = on.iter().zip(off).map(|(a, b)| a - b).collect();
    let s1: f64 = d.iter().sum();
    let s2: f64 = d.iter().map(|x| x * x).sum();
    let var = (s2 - s1 * s1 / n) / (n - 1.0);
    (s1 / n) / (var / n).sqrt()
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

fn arms() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..40).prop_flat_map(|n| {
        (
            proptest::collection::vec(0.0..100.0f64, n),
            proptest::collection::vec(0.0..100.0f64, n),
        )
    })
}

fn check_self_consistent(rep: &PairedReport) {
    let on: Vec<f64> = rep.per_pair.iter().map(|r| r.score_on).collect();
    let off: Vec<f64> = rep.per_pair.iter().map(|r| r.score_off).collect();
    let again = paired_stats(&on, &off).unwrap();
    assert_eq!(again.n_pairs, rep.n_pairs);
    assert_eq!(again.df, rep.n_pairs - 1);
    assert_eq!(again.t_stat, rep.t_stat);
    assert_eq!(again.mean_on, rep.mean_on);
    assert_eq!(again.mean_off, rep.mean_off);
    let improved = rep.per_pair.iter().filter(|r| r.score_on > r.score_off).count();
    assert_eq!(rep.improved_fraction, improved as f64 / rep.n_pairs as f64);
}

proptest! {
    #[test]
    fn t_matches_sum_formula((on, off) in arms()) {
        let rep = paired_stats(&on, &off).unwrap();
        prop_assert!(close(rep.t_stat, t_from_sums(&on, &off), 1e-6));
        check_self_consistent(&rep);
    }

    #[test]
    fn translation_invariance((on, off) in arms(), c in -50.0..50.0f64) {
        let base = paired_stats(&on, &off).unwrap();
        let on2: Vec<f64> = on.iter().map(|x| x + c).collect();
        let off2: Vec<f64> = off.iter().map(|x| x + c).collect();
        let moved = paired_stats(&on2, &off2).unwrap();
        prop_assert!(close(moved.t_stat, base.t_stat, 1e-6));
        prop_assert!(close(moved.mean_diff, base.mean_diff, 1e-9));
        prop_assert_eq!(moved.df, base.df);
    }

    #[test]
    fn antisymmetry((on, off) in arms()) {
        let fwd = paired_stats(&on, &off).unwrap();
        let rev = paired_stats(&off, &on).unwrap();
        prop_assert!(close(rev.t_stat, -fwd.t_stat, 1e-9));
        prop_assert!(close(rev.mean_diff, -fwd.mean_diff, 1e-12));
        let decreases = on.iter().zip(&off).filter(|(a, b)| a < b).count();
        prop_assert_eq!(rev.improved_fraction, decreases as f64 / on.len() as f64);
    }
}

#[test]
fn r_star_matches_endpoint_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..200 {
        let config = random_config(&mut rng);
        let (att, scores) = random_stream(&mut rng, &config);
        let snaps = fold_stream(&att, &scores, &config).unwrap();
        let r_0 = rand::Rng::random_range(&mut rng, -1.0..1.0);
        let first = snaps.first().unwrap().score_ratio;
        let last = snaps.last().unwrap().score_ratio;
        assert!((r_star_sum(&snaps, r_0) - (last - first + r_0)).abs() <= 1e-12);
    }
}
