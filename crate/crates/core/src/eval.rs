//! Test-set metrics and the post-processing baseline.

use std::collections::{BTreeMap, HashSet};

use crate::context::ContextVectors;
use crate::dataset::RatingsDataset;
use crate::error::{Error, Result};
use crate::model::{LatentModel, ScoreMatrix};
use crate::numeric::pairwise_sum;
use crate::objective::{capacity_term, AccuracyKind, SurrogateKind};

/// Per-user item lists, best first.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RankedList {
    pub lists: Vec<Vec<usize>>,
}

impl RankedList {
    pub fn num_users(&self) -> usize {
        self.lists.len()
    }

    /// The first `k` items of `user`'s list.
    pub fn top(&self, user: usize, k: usize) -> &[usize] {
        let l = &self.lists[user];
        &l[..k.min(l.len())]
    }
}

/// Descending by score; `-0.0` and `0.0` tie.
fn by_score_desc(a: f64, b: f64) -> std::cmp::Ordering {
    (b + 0.0).total_cmp(&(a + 0.0))
}

/// Sorts `items` by descending score, ties by ascending item index.
fn sort_by_score(items: &mut [usize], score: impl Fn(usize) -> f64) {
    items.sort_by(|&a, &b| by_score_desc(score(a), score(b)).then(a.cmp(&b)));
}

/// Ranks each user's candidate items (the items they have in `candidates`)
/// by predicted score.
pub fn rank_candidates(scores: &ScoreMatrix, candidates: &RatingsDataset) -> RankedList {
    let lists = (0..candidates.num_users())
        .map(|u| {
            let mut items: Vec<usize> = candidates.user_ratings(u).map(|(j, _)| j).collect();
            sort_by_score(&mut items, |j| scores.get(u, j));
            items
        })
        .collect();
    RankedList { lists }
}

/// Ranks all items for every user.
pub fn rank_all(scores: &ScoreMatrix) -> RankedList {
    let lists = (0..scores.num_users())
        .map(|u| {
            let mut items: Vec<usize> = (0..scores.num_items()).collect();
            sort_by_score(&mut items, |j| scores.get(u, j));
            items
        })
        .collect();
    RankedList { lists }
}

/// Per-user normalized RMSE:
/// `sqrt((1/M) Σ_i (1/|L_i|) Σ_{j∈L_i} (r̂_ij − r_ij)²)` over users with test
/// ratings.
pub fn rmse(model: &LatentModel, test: &RatingsDataset) -> Result<f64> {
    let per_user: Vec<f64> = (0..test.num_users())
        .filter(|&u| test.user_count(u) > 0)
        .map(|u| {
            let sq: Vec<f64> = test
                .user_ratings(u)
                .map(|(j, r)| {
                    let e = model.predict(u, j) - r;
                    e * e
                })
                .collect();
            pairwise_sum(&sq) / sq.len() as f64
        })
        .collect();
    if per_user.is_empty() {
        return Err(Error::Metric("RMSE of an empty test set".into()));
    }
    Ok((pairwise_sum(&per_user) / per_user.len() as f64).sqrt())
}

/// Fraction of (positive, negative) test pairs ordered wrongly, with ties
/// counted as wrong, averaged over users having both kinds of test items.
pub fn pairwise01_loss(model: &LatentModel, test: &RatingsDataset) -> Result<f64> {
    let per_user: Vec<f64> = (0..test.num_users())
        .filter_map(|u| {
            let pos: Vec<f64> = test.positives(u).map(|j| model.predict(u, j)).collect();
            let neg: Vec<f64> = test.negatives(u).map(|j| model.predict(u, j)).collect();
            if pos.is_empty() || neg.is_empty() {
                return None;
            }
            let wrong = neg
                .iter()
                .map(|&n| pos.iter().filter(|&&p| n >= p).count())
                .sum::<usize>();
            Some(wrong as f64 / (pos.len() * neg.len()) as f64)
        })
        .collect();
    if per_user.is_empty() {
        return Err(Error::Metric(
            "no test user has both positive and negative items".into(),
        ));
    }
    Ok(pairwise_sum(&per_user) / per_user.len() as f64)
}

/// Capacity loss of the trained model; the same quantity as the capacity
/// term of the objective.
pub fn capacity_loss_metric(model: &LatentModel, ctx: &ContextVectors, surrogate: SurrogateKind) -> f64 {
    capacity_term(model, ctx, surrogate)
}

/// `(1 − α)·RMSE² + α·capacity` (square) or `(1 − α)·pairwise + α·capacity`
/// (BPR). `accuracy_metric` is the RMSE or the pairwise loss accordingly.
pub fn overall_metric(accuracy_metric: f64, capacity_loss: f64, alpha: f64, kind: AccuracyKind) -> f64 {
    let acc = match kind {
        AccuracyKind::Square => accuracy_metric * accuracy_metric,
        AccuracyKind::Bpr => accuracy_metric,
    };
    (1.0 - alpha) * acc + alpha * capacity_loss
}

/// AP@k of one list: `Σ_{r≤k} P@r·rel(r) / min(k, relevant_total)`. `None`
/// when the user has nothing relevant.
pub fn average_precision(list: &[usize], is_relevant: impl Fn(usize) -> bool, relevant_total: usize, k: usize) -> Option<f64> {
    if relevant_total == 0 || k == 0 {
        return None;
    }
    let mut hits = 0;
    let mut sum = 0.0;
    for (r, &j) in list.iter().take(k).enumerate() {
        if is_relevant(j) {
            hits += 1;
            sum += hits as f64 / (r + 1) as f64;
        }
    }
    Some(sum / k.min(relevant_total) as f64)
}

/// AP@k per user; `None` for users without a relevant test item.
pub fn user_average_precisions(ranked: &RankedList, test: &RatingsDataset, k: usize) -> Result<Vec<Option<f64>>> {
    if k == 0 {
        return Err(Error::invalid("top-k cutoff must be >= 1"));
    }
    if ranked.num_users() != test.num_users() {
        return Err(Error::invalid("ranked lists and test set disagree on user count"));
    }
    Ok((0..test.num_users())
        .map(|u| {
            let relevant: HashSet<usize> = test.positives(u).collect();
            average_precision(&ranked.lists[u], |j| relevant.contains(&j), relevant.len(), k)
        })
        .collect())
}

/// Mean AP@k over users that have at least one relevant test item.
pub fn map_at_k(ranked: &RankedList, test: &RatingsDataset, k: usize) -> Result<f64> {
    let aps: Vec<f64> = user_average_precisions(ranked, test, k)?.into_iter().flatten().collect();
    if aps.is_empty() {
        return Err(Error::Metric("no user has a relevant test item".into()));
    }
    Ok(pairwise_sum(&aps) / aps.len() as f64)
}

/// Propensity-weighted mean of AP@k over eligible users.
pub fn wap_at_k(ranked: &RankedList, test: &RatingsDataset, propensities: &[f64], k: usize) -> Result<f64> {
    if propensities.len() != test.num_users() {
        return Err(Error::invalid("propensity vector length differs from user count"));
    }
    let mut num = Vec::new();
    let mut den = Vec::new();
    for (u, ap) in user_average_precisions(ranked, test, k)?.into_iter().enumerate() {
        if let Some(ap) = ap {
            num.push(propensities[u] * ap);
            den.push(propensities[u]);
        }
    }
    let den = pairwise_sum(&den);
    if !(den > 0.0) {
        return Err(Error::Metric("total propensity of eligible users is zero".into()));
    }
    Ok(pairwise_sum(&num) / den)
}

/// Propensity mass `Σ_{i∈Re^top(j)} p_i` of the users holding each item in
/// their top-k list.
pub fn recommended_mass(ranked: &RankedList, propensities: &[f64], num_items: usize, k: usize) -> Vec<f64> {
    let mut mass = vec![0.0; num_items];
    for (u, _) in ranked.lists.iter().enumerate() {
        for &j in ranked.top(u, k) {
            mass[j] += propensities[u];
        }
    }
    mass
}

/// `|Re^top(j)|` for every item.
pub fn recommended_counts(ranked: &RankedList, num_items: usize, k: usize) -> Vec<usize> {
    let mut counts = vec![0; num_items];
    for u in 0..ranked.num_users() {
        for &j in ranked.top(u, k) {
            counts[j] += 1;
        }
    }
    counts
}

/// Fraction of items whose top-k propensity mass reaches their capacity.
pub fn wmcv_at_k(ranked: &RankedList, ctx: &ContextVectors, k: usize) -> f64 {
    let n = ctx.num_items();
    if n == 0 {
        return 0.0;
    }
    let mass = recommended_mass(ranked, ctx.propensities(), n, k);
    let violated = mass
        .iter()
        .zip(ctx.capacities())
        .filter(|(m, c)| m >= c)
        .count();
    violated as f64 / n as f64
}

/// Capacity-respecting re-ranking of an unconstrained model's scores.
///
/// Each item goes only to the `⌊c_j⌋` users scoring it highest (ties to the
/// lower user index); each user's allowed items are then ranked by score and
/// cut to `k`. With `candidates`, a user only competes for, and is only
/// offered, items in their candidate set.
pub fn post_process_baseline(
    scores: &ScoreMatrix,
    ctx: &ContextVectors,
    k: usize,
    candidates: Option<&RatingsDataset>,
) -> RankedList {
    let (m, n) = (scores.num_users(), scores.num_items());
    let mut users_of: Vec<Vec<usize>> = vec![Vec::new(); n];
    match candidates {
        Some(c) => {
            for u in 0..m {
                for (j, _) in c.user_ratings(u) {
                    users_of[j].push(u);
                }
            }
        }
        None => users_of.iter_mut().for_each(|l| l.extend(0..m)),
    }
    let mut allowed: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (j, users) in users_of.iter_mut().enumerate() {
        users.sort_by(|&a, &b| by_score_desc(scores.get(a, j), scores.get(b, j)).then(a.cmp(&b)));
        let quota = ctx.capacities()[j].floor() as usize;
        for &u in users.iter().take(quota) {
            allowed[u].push(j);
        }
    }
    let lists = allowed
        .into_iter()
        .enumerate()
        .map(|(u, mut items)| {
            sort_by_score(&mut items, |j| scores.get(u, j));
            items.truncate(k);
            items
        })
        .collect();
    RankedList { lists }
}

/// Metrics for one trained model on the test split.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub rmse: f64,
    /// Undefined when no test user has both positive and negative items.
    pub pairwise01: Option<f64>,
    pub capacity_loss: f64,
    pub overall: f64,
    pub map_at: BTreeMap<usize, f64>,
    pub wap_at: BTreeMap<usize, f64>,
    pub wmcv_at: BTreeMap<usize, f64>,
}

/// Ranking metrics of one set of ranked lists at each cutoff.
pub fn ranking_metrics(
    ranked: &RankedList,
    test: &RatingsDataset,
    ctx: &ContextVectors,
    tops: &[usize],
) -> Result<(BTreeMap<usize, f64>, BTreeMap<usize, f64>, BTreeMap<usize, f64>)> {
    let mut map = BTreeMap::new();
    let mut wap = BTreeMap::new();
    let mut wmcv = BTreeMap::new();
    for &k in tops {
        map.insert(k, map_at_k(ranked, test, k)?);
        wap.insert(k, wap_at_k(ranked, test, ctx.propensities(), k)?);
        wmcv.insert(k, wmcv_at_k(ranked, ctx, k));
    }
    Ok((map, wap, wmcv))
}

/// Evaluates `model` on `test`. Rankings use each user's test items as the
/// candidate set. `overall` mixes the accuracy metric matching `kind` with
/// the capacity loss at weight `alpha`.
pub fn evaluate(
    model: &LatentModel,
    test: &RatingsDataset,
    ctx: &ContextVectors,
    kind: AccuracyKind,
    surrogate: SurrogateKind,
    alpha: f64,
    tops: &[usize],
) -> Result<MetricsReport> {
    let rmse = rmse(model, test)?;
    let pairwise01 = pairwise01_loss(model, test).ok();
    let capacity_loss = capacity_loss_metric(model, ctx, surrogate);
    let accuracy_metric = match kind {
        AccuracyKind::Square => rmse,
        AccuracyKind::Bpr => pairwise01.unwrap_or(f64::NAN),
    };
    let ranked = rank_candidates(&model.score_matrix(), test);
    let (map_at, wap_at, wmcv_at) = ranking_metrics(&ranked, test, ctx, tops)?;
    Ok(MetricsReport {
        rmse,
        pairwise01,
        capacity_loss,
        overall: overall_metric(accuracy_metric, capacity_loss, alpha, kind),
        map_at,
        wap_at,
        wmcv_at,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{FeedbackMode, Rating};
    use crate::model::Factors;

    fn scalar_model(users: &[f64], items: &[f64]) -> LatentModel {
        LatentModel::new(
            Factors::from_columns(1, users.len(), users.to_vec()).unwrap(),
            Factors::from_columns(1, items.len(), items.to_vec()).unwrap(),
            None,
        )
        .unwrap()
    }

    fn data(m: usize, n: usize, ratings: &[(usize, usize, f64)]) -> RatingsDataset {
        RatingsDataset::new(
            m,
            n,
            ratings.iter().map(|&(u, j, v)| Rating::new(u, j, v)).collect(),
            FeedbackMode::ExplicitPm1,
        )
        .unwrap()
    }

    #[test]
    fn rmse_examples() {
        let m = scalar_model(&[1.0], &[1.0, -1.0]);
        assert_eq!(rmse(&m, &data(1, 2, &[(0, 0, 1.0), (0, 1, -1.0)])).unwrap(), 0.0);
        let m = scalar_model(&[1.0], &[0.5]);
        assert_eq!(rmse(&m, &data(1, 1, &[(0, 0, 1.0)])).unwrap(), 0.5);
        // per-user MSEs 0.04 and 0.16
        let m = scalar_model(&[1.0, 1.0], &[0.8, 0.6]);
        let t = data(2, 2, &[(0, 0, 1.0), (1, 1, 1.0)]);
        assert!((rmse(&m, &t).unwrap() - 0.1f64.sqrt()).abs() < 1e-12);
        assert!(rmse(&m, &data(2, 2, &[])).is_err());
    }

    #[test]
    fn pairwise_examples() {
        let t = data(1, 3, &[(0, 0, 1.0), (0, 1, 1.0), (0, 2, -1.0)]);
        let good = scalar_model(&[1.0], &[3.0, 2.0, 1.0]);
        assert_eq!(pairwise01_loss(&good, &t).unwrap(), 0.0);
        let tied = scalar_model(&[1.0], &[1.0, 1.0, 1.0]);
        assert_eq!(pairwise01_loss(&tied, &t).unwrap(), 1.0);
        let half = scalar_model(&[1.0], &[2.0, 0.0, 1.0]);
        assert_eq!(pairwise01_loss(&half, &t).unwrap(), 0.5);
        assert!(pairwise01_loss(&half, &data(1, 3, &[(0, 0, 1.0)])).is_err());
    }

    #[test]
    fn overall_examples() {
        assert_eq!(overall_metric(0.5, 0.2, 0.0, AccuracyKind::Square), 0.25);
        assert_eq!(overall_metric(0.5, 0.2, 1.0, AccuracyKind::Square), 0.2);
        assert!((overall_metric(0.5, 0.2, 0.4, AccuracyKind::Square) - 0.23).abs() < 1e-15);
        assert!((overall_metric(0.1, 0.2, 0.5, AccuracyKind::Bpr) - 0.15).abs() < 1e-15);
    }

    #[test]
    fn ap_examples() {
        let rel = |j: usize| j != 1;
        // (rel, non, rel), 2 relevant
        assert!((average_precision(&[0, 1, 2], rel, 2, 3).unwrap() - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(average_precision(&[0, 2], rel, 2, 2).unwrap(), 1.0);
        assert_eq!(average_precision(&[1, 0], rel, 1, 1).unwrap(), 0.0);
        assert_eq!(average_precision(&[1, 0], |_| false, 0, 1), None);
    }

    #[test]
    fn map_and_wap() {
        let t = data(2, 3, &[(0, 0, 1.0), (0, 1, -1.0), (1, 2, 1.0), (1, 1, -1.0)]);
        let ranked = RankedList {
            lists: vec![vec![0, 1], vec![1, 2]],
        };
        // AP_0 = 1, AP_1 = 0.5
        assert_eq!(map_at_k(&ranked, &t, 2).unwrap(), 0.75);
        assert_eq!(wap_at_k(&ranked, &t, &[0.3, 0.3], 2).unwrap(), 0.75);
        assert!((wap_at_k(&ranked, &t, &[0.2, 0.8], 2).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(wap_at_k(&ranked, &t, &[0.0, 1.0], 2).unwrap(), 0.5);
        assert!(wap_at_k(&ranked, &t, &[0.0, 0.0], 2).is_err());
        assert!(map_at_k(&ranked, &t, 0).is_err());
    }

    #[test]
    fn wmcv_examples() {
        let ranked = RankedList {
            lists: vec![vec![0], vec![0], vec![1]],
        };
        let ctx = ContextVectors::new(vec![0.6, 0.6, 0.1], vec![1.0, 5.0]).unwrap();
        // item 0 gets mass 1.2 ≥ 1.0; item 1 gets 0.1
        assert_eq!(wmcv_at_k(&ranked, &ctx, 1), 0.5);
        let roomy = ContextVectors::new(vec![0.6, 0.6, 0.1], vec![2.0, 2.0]).unwrap();
        assert_eq!(wmcv_at_k(&ranked, &roomy, 1), 0.0);
    }

    #[test]
    fn baseline_without_pruning_matches_plain_ranking() {
        let scores = ScoreMatrix::from_rows(2, 3, vec![0.1, 0.9, 0.5, 0.7, 0.7, 0.2]).unwrap();
        let ctx = ContextVectors::new(vec![0.5, 0.5], vec![2.0, 2.0, 3.0]).unwrap();
        let base = post_process_baseline(&scores, &ctx, 3, None);
        assert_eq!(base, rank_all(&scores));
        assert_eq!(base.lists[1], vec![0, 1, 2]);
    }

    #[test]
    fn baseline_unit_capacity_goes_to_best_user() {
        let scores = ScoreMatrix::from_rows(3, 2, vec![0.1, 0.9, 0.8, 0.3, 0.5, 0.7]).unwrap();
        let ctx = ContextVectors::new(vec![0.5; 3], vec![1.0, 2.0]).unwrap();
        let base = post_process_baseline(&scores, &ctx, 2, None);
        // item 0 only to user 1; item 1 to users 0 and 2
        assert_eq!(base.lists, vec![vec![1], vec![0], vec![1]]);
        assert_eq!(recommended_counts(&base, 2, 2), vec![1, 2]);
    }
}
