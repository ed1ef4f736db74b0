//! Metrics against brute-force enumeration on small random instances.

use capmf::eval::{map_at_k, pairwise01_loss, rank_all, rank_candidates, rmse, wap_at_k, wmcv_at_k, RankedList};
use capmf::{ContextVectors, Factors, FeedbackMode, LatentModel, Rating, RatingsDataset};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Case {
    m: usize,
    n: usize,
    /// dense labels: 0 unlabeled, +1 / -1
    labels: Vec<Vec<i8>>,
    scores: Vec<Vec<f64>>,
    model: LatentModel,
    test: RatingsDataset,
    ctx: ContextVectors,
}

fn case(rng: &mut ChaCha8Rng) -> Case {
    let m = rng.random_range(1..=5);
    let n = rng.random_range(1..=5);
    // small integer factors so that ties show up
    let ints = |len: usize, rng: &mut ChaCha8Rng| -> Vec<f64> { (0..len).map(|_| rng.random_range(-2..=2) as f64).collect() };
    let u = ints(m, rng);
    let v = ints(n, rng);
    let model = LatentModel::new(
        Factors::from_columns(1, m, u.clone()).unwrap(),
        Factors::from_columns(1, n, v.clone()).unwrap(),
        None,
    )
    .unwrap();
    let scores: Vec<Vec<f64>> = u.iter().map(|a| v.iter().map(|b| a * b).collect()).collect();
    let mut labels = vec![vec![0i8; n]; m];
    let mut ratings = Vec::new();
    for (i, row) in labels.iter_mut().enumerate() {
        for (j, l) in row.iter_mut().enumerate() {
            *l = [0, 1, -1][rng.random_range(0..3)];
            if *l != 0 {
                ratings.push(Rating::new(i, j, *l as f64));
            }
        }
    }
    let test = RatingsDataset::new(m, n, ratings, FeedbackMode::Implicit01).unwrap();
    let p = (0..m).map(|_| rng.random_range(0..=4) as f64 / 4.0).collect();
    let c = (0..n).map(|_| rng.random_range(1..=8) as f64 / 4.0).collect();
    let ctx = ContextVectors::new(p, c).unwrap();
    Case { m, n, labels, scores, model, test, ctx }
}

/// Labeled items of user `i`, best score first, ties to the lower index,
/// found by repeatedly picking the maximum.
fn oracle_ranking(c: &Case, i: usize) -> Vec<usize> {
    let mut left: Vec<usize> = (0..c.n).filter(|&j| c.labels[i][j] != 0).collect();
    let mut out = Vec::new();
    while !left.is_empty() {
        let mut best = 0;
        for (pos, &j) in left.iter().enumerate() {
            let b = left[best];
            if c.scores[i][j] > c.scores[i][b] || (c.scores[i][j] == c.scores[i][b] && j < b) {
                best = pos;
            }
        }
        out.push(left.remove(best));
    }
    out
}

fn oracle_ap(c: &Case, i: usize, k: usize) -> Option<f64> {
    let rel_total = c.labels[i].iter().filter(|&&l| l > 0).count();
    if rel_total == 0 {
        return None;
    }
    let list = oracle_ranking(c, i);
    let mut sum = 0.0;
    for r in 1..=k.min(list.len()) {
        if c.labels[i][list[r - 1]] > 0 {
            let hits = list[..r].iter().filter(|&&j| c.labels[i][j] > 0).count();
            sum += hits as f64 / r as f64;
        }
    }
    Some(sum / k.min(rel_total) as f64)
}

fn oracle_map(c: &Case, k: usize) -> Option<f64> {
    let aps: Vec<f64> = (0..c.m).filter_map(|i| oracle_ap(c, i, k)).collect();
    (!aps.is_empty()).then(|| aps.iter().sum::<f64>() / aps.len() as f64)
}

fn oracle_wap(c: &Case, k: usize) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..c.m {
        if let Some(ap) = oracle_ap(c, i, k) {
            num += c.ctx.propensities()[i] * ap;
            den += c.ctx.propensities()[i];
        }
    }
    (den > 0.0).then(|| num / den)
}

fn oracle_pairwise(c: &Case) -> Option<f64> {
    let mut per_user = Vec::new();
    for i in 0..c.m {
        let (mut wrong, mut total) = (0usize, 0usize);
        for a in 0..c.n {
            for b in 0..c.n {
                if c.labels[i][a] > 0 && c.labels[i][b] < 0 {
                    total += 1;
                    if c.scores[i][b] >= c.scores[i][a] {
                        wrong += 1;
                    }
                }
            }
        }
        if total > 0 {
            per_user.push(wrong as f64 / total as f64);
        }
    }
    (!per_user.is_empty()).then(|| per_user.iter().sum::<f64>() / per_user.len() as f64)
}

fn oracle_wmcv(c: &Case, k: usize) -> f64 {
    let mut violated = 0;
    for j in 0..c.n {
        let mut mass = 0.0;
        for i in 0..c.m {
            let list = oracle_ranking(c, i);
            if list.iter().take(k).any(|&x| x == j) {
                mass += c.ctx.propensities()[i];
            }
        }
        if mass >= c.ctx.capacities()[j] {
            violated += 1;
        }
    }
    violated as f64 / c.n as f64
}

fn oracle_rmse(c: &Case) -> Option<f64> {
    let mut per_user = Vec::new();
    for i in 0..c.m {
        let errs: Vec<f64> = (0..c.n)
            .filter(|&j| c.labels[i][j] != 0)
            .map(|j| (c.scores[i][j] - c.labels[i][j] as f64).powi(2))
            .collect();
        if !errs.is_empty() {
            per_user.push(errs.iter().sum::<f64>() / errs.len() as f64);
        }
    }
    (!per_user.is_empty()).then(|| (per_user.iter().sum::<f64>() / per_user.len() as f64).sqrt())
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + b.abs())
}

#[test]
fn metrics_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for n_case in 0..1500 {
        let c = case(&mut rng);
        let ranked = rank_candidates(&c.model.score_matrix(), &c.test);
        for i in 0..c.m {
            assert_eq!(ranked.lists[i], oracle_ranking(&c, i), "case {n_case} ranking of user {i}");
        }
        match (pairwise01_loss(&c.model, &c.test), oracle_pairwise(&c)) {
            (Ok(a), Some(b)) => assert!(close(a, b), "case {n_case}: pairwise {a} vs {b}"),
            (Err(_), None) => {}
            (a, b) => panic!("case {n_case}: pairwise {a:?} vs {b:?}"),
        }
        match (rmse(&c.model, &c.test), oracle_rmse(&c)) {
            (Ok(a), Some(b)) => assert!(close(a, b), "case {n_case}: rmse {a} vs {b}"),
            (Err(_), None) => {}
            (a, b) => panic!("case {n_case}: rmse {a:?} vs {b:?}"),
        }
        for k in 1..=3 {
            match (map_at_k(&ranked, &c.test, k), oracle_map(&c, k)) {
                (Ok(a), Some(b)) => assert!(close(a, b), "case {n_case} k={k}: map {a} vs {b}"),
                (Err(_), None) => {}
                (a, b) => panic!("case {n_case} k={k}: map {a:?} vs {b:?}"),
            }
            match (wap_at_k(&ranked, &c.test, c.ctx.propensities(), k), oracle_wap(&c, k)) {
                (Ok(a), Some(b)) => assert!(close(a, b), "case {n_case} k={k}: wap {a} vs {b}"),
                (Err(_), None) => {}
                (a, b) => panic!("case {n_case} k={k}: wap {a:?} vs {b:?}"),
            }
            let w = wmcv_at_k(&ranked, &c.ctx, k);
            assert!(close(w, oracle_wmcv(&c, k)), "case {n_case} k={k}: wmcv");
        }
    }
}

#[test]
fn hand_worked_values() {
    // (rel, non, rel), k = 3
    let ap = capmf::eval::average_precision(&[0, 1, 2], |j| j != 1, 2, 3).unwrap();
    assert!((ap - 5.0 / 6.0).abs() < 1e-15);
    // pos scores (2, 0), neg score 1
    let model = LatentModel::new(
        Factors::from_columns(1, 1, vec![1.0]).unwrap(),
        Factors::from_columns(1, 3, vec![2.0, 0.0, 1.0]).unwrap(),
        None,
    )
    .unwrap();
    let test = RatingsDataset::new(
        1,
        3,
        vec![Rating::new(0, 0, 1.0), Rating::new(0, 1, 1.0), Rating::new(0, 2, -1.0)],
        FeedbackMode::Implicit01,
    )
    .unwrap();
    assert_eq!(pairwise01_loss(&model, &test).unwrap(), 0.5);
}

fn ranked_from(scores: &[Vec<f64>]) -> RankedList {
    let m = scores.len();
    let n = scores[0].len();
    let flat: Vec<f64> = scores.iter().flatten().copied().collect();
    rank_all(&capmf::ScoreMatrix::from_rows(m, n, flat).unwrap())
}

proptest! {
    #[test]
    fn map_ignores_monotone_transforms(seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = case(&mut rng);
        let k = 3;
        let ranked = rank_candidates(&c.model.score_matrix(), &c.test);
        let squashed: Vec<f64> = c.scores.iter().flatten().map(|s| (s * 0.7).tanh() * 3.0 + 1.0).collect();
        let other = rank_candidates(&capmf::ScoreMatrix::from_rows(c.m, c.n, squashed).unwrap(), &c.test);
        prop_assert_eq!(map_at_k(&ranked, &c.test, k).ok(), map_at_k(&other, &c.test, k).ok());
    }

    #[test]
    fn user_order_does_not_matter(seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = case(&mut rng);
        let perm: Vec<usize> = (0..c.m).rev().collect();
        let scores: Vec<Vec<f64>> = perm.iter().map(|&i| c.scores[i].clone()).collect();
        let ratings: Vec<Rating> = perm
            .iter()
            .enumerate()
            .flat_map(|(new, &old)| c.test.user_ratings(old).map(move |(j, v)| Rating::new(new, j, v)).collect::<Vec<_>>())
            .collect();
        let test = RatingsDataset::new(c.m, c.n, ratings, FeedbackMode::Implicit01).unwrap();
        let p: Vec<f64> = perm.iter().map(|&i| c.ctx.propensities()[i]).collect();
        let ctx = ContextVectors::new(p, c.ctx.capacities().to_vec()).unwrap();
        let flat: Vec<f64> = scores.iter().flatten().copied().collect();
        let a = rank_candidates(&c.model.score_matrix(), &c.test);
        let b = rank_candidates(&capmf::ScoreMatrix::from_rows(c.m, c.n, flat).unwrap(), &test);
        for k in 1..=3 {
            let (x, y) = (map_at_k(&a, &c.test, k).ok(), map_at_k(&b, &test, k).ok());
            prop_assert_eq!(x.is_some(), y.is_some());
            if let (Some(x), Some(y)) = (x, y) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            prop_assert_eq!(wmcv_at_k(&a, &c.ctx, k), wmcv_at_k(&b, &ctx, k));
        }
        let full = ranked_from(&scores);
        prop_assert_eq!(full.num_users(), c.m);
    }
}
