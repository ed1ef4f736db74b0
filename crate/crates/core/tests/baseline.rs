//! Post-processing baseline: capacity bound and brute-force assignment.

use capmf::eval::{post_process_baseline, rank_all, recommended_counts};
use capmf::{ContextVectors, ScoreMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn never_exceeds_floor_of_capacity() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..100 {
        let m = rng.random_range(1..=30);
        let n = rng.random_range(1..=20);
        let scores: Vec<f64> = (0..m * n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let scores = ScoreMatrix::from_rows(m, n, scores).unwrap();
        let caps: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..(m as f64 + 2.0))).collect();
        let p = (0..m).map(|_| rng.random_range(0.0..=1.0)).collect();
        let ctx = ContextVectors::new(p, caps.clone()).unwrap();
        for k in [1, 5, 10] {
            let ranked = post_process_baseline(&scores, &ctx, k, None);
            let counts = recommended_counts(&ranked, n, k);
            for j in 0..n {
                assert!(counts[j] <= caps[j].floor() as usize, "case {case} k={k} item {j}");
            }
            for u in 0..m {
                assert!(ranked.lists[u].len() <= k);
            }
        }

        let loose = ContextVectors::new(vec![0.5; m], vec![m as f64 + 0.5; n]).unwrap();
        let full = rank_all(&scores);
        for k in [1, 5, 10] {
            let ranked = post_process_baseline(&scores, &loose, k, None);
            for u in 0..m {
                assert_eq!(ranked.lists[u], full.top(u, k), "case {case} k={k} user {u}");
            }
        }
    }
}

/// Tries every subset of users for every item and keeps, per item, the
/// `⌊c_j⌋`-subset with the largest score sum.
fn brute_force(scores: &[Vec<f64>], caps: &[f64], k: usize) -> Vec<Vec<usize>> {
    let m = scores.len();
    let n = caps.len();
    let mut allowed = vec![Vec::new(); m];
    for j in 0..n {
        let quota = (caps[j].floor() as usize).min(m);
        let mut best: Option<(f64, u32)> = None;
        for mask in 0u32..(1 << m) {
            if mask.count_ones() as usize != quota {
                continue;
            }
            let sum: f64 = (0..m).filter(|u| mask >> u & 1 == 1).map(|u| scores[u][j]).sum();
            if best.is_none_or(|(s, _)| sum > s) {
                best = Some((sum, mask));
            }
        }
        let mask = best.unwrap().1;
        for (u, list) in allowed.iter_mut().enumerate() {
            if mask >> u & 1 == 1 {
                list.push(j);
            }
        }
    }
    for (u, list) in allowed.iter_mut().enumerate() {
        list.sort_by(|&a, &b| scores[u][b].partial_cmp(&scores[u][a]).unwrap());
        list.truncate(k);
    }
    allowed
}

#[test]
fn agrees_with_subset_enumeration() {
    // fixture: 3 users, 2 items, c = (1, 2)
    let s = vec![vec![0.9, 0.1], vec![0.5, 0.7], vec![0.2, 0.3]];
    let flat: Vec<f64> = s.iter().flatten().copied().collect();
    let ctx = ContextVectors::new(vec![1.0; 3], vec![1.0, 2.0]).unwrap();
    let got = post_process_baseline(&ScoreMatrix::from_rows(3, 2, flat).unwrap(), &ctx, 2, None);
    assert_eq!(got.lists, vec![vec![0], vec![1], vec![1]]);
    assert_eq!(got.lists, brute_force(&s, &[1.0, 2.0], 2));

    // distinct random scores, so the optimal subset is unique
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let m = rng.random_range(1..=6);
        let n = rng.random_range(1..=4);
        let s: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect();
        let caps: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..7.0)).collect();
        let flat: Vec<f64> = s.iter().flatten().copied().collect();
        let ctx = ContextVectors::new(vec![1.0; m], caps.clone()).unwrap();
        let k = rng.random_range(1..=4);
        let got = post_process_baseline(&ScoreMatrix::from_rows(m, n, flat).unwrap(), &ctx, k, None);
        assert_eq!(got.lists, brute_force(&s, &caps, k));
    }
}
