//! Expected usage, capacity surrogates and the full training objective
//!
//! `total = (1 − α)·accuracy + α·capacity + λ·(‖U‖² + ‖V‖² [+ ‖X‖²])`
//!
//! where `capacity = (1/N) Σ_j ℓ(c_j − E[usage(j)])` and
//! `E[usage(j)] = Σ_i p_i σ(r̂_ij)`.

use std::fmt;
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;

use crate::context::ContextVectors;
use crate::dataset::RatingsDataset;
use crate::error::{Error, Result};
use crate::model::{LatentModel, ScoreMatrix};
use crate::numeric::{pairwise_sum, sigmoid, softplus};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum SurrogateKind {
    #[default]
    Logistic,
    Exponential,
    Hinge,
}

impl fmt::Display for SurrogateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SurrogateKind::Logistic => "logistic",
            SurrogateKind::Exponential => "exponential",
            SurrogateKind::Hinge => "hinge",
        })
    }
}

impl FromStr for SurrogateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(SurrogateKind::Logistic),
            "exponential" => Ok(SurrogateKind::Exponential),
            "hinge" => Ok(SurrogateKind::Hinge),
            other => Err(Error::invalid(format!("unknown surrogate `{other}`"))),
        }
    }
}

/// Penalty for the capacity slack `delta = c_j − E[usage(j)]`. Negative slack
/// is a violated constraint.
///
/// The exponential loss overflows to `+inf` once `delta < −709`.
pub fn surrogate_loss(kind: SurrogateKind, delta: f64) -> f64 {
    match kind {
        SurrogateKind::Logistic => softplus(-delta),
        SurrogateKind::Exponential => (-delta).exp(),
        SurrogateKind::Hinge => (-delta).max(0.0),
    }
}

/// `−dℓ/dΔ`, which is non-negative for all three surrogates. The hinge uses
/// the subgradient 0 at the kink.
pub fn surrogate_slope(kind: SurrogateKind, delta: f64) -> f64 {
    match kind {
        SurrogateKind::Logistic => sigmoid(-delta),
        SurrogateKind::Exponential => (-delta).exp(),
        SurrogateKind::Hinge => {
            if delta < 0.0 {
                1.0
            } else {
                0.0
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum AccuracyKind {
    /// Squared rating error (PMF / GeoMF).
    #[default]
    Square,
    /// Pairwise logistic ranking loss (BPR).
    Bpr,
}

impl fmt::Display for AccuracyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AccuracyKind::Square => "square",
            AccuracyKind::Bpr => "bpr",
        })
    }
}

impl FromStr for AccuracyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "square" => Ok(AccuracyKind::Square),
            "bpr" => Ok(AccuracyKind::Bpr),
            other => Err(Error::invalid(format!("unknown accuracy objective `{other}`"))),
        }
    }
}

/// The pieces of the objective at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveBreakdown {
    pub accuracy_term: f64,
    pub capacity_term: f64,
    pub regularization_term: f64,
    pub total: f64,
    pub alpha: f64,
}

impl ObjectiveBreakdown {
    pub fn combine(alpha: f64, accuracy: f64, capacity: f64, regularization: f64) -> Self {
        ObjectiveBreakdown {
            accuracy_term: accuracy,
            capacity_term: capacity,
            regularization_term: regularization,
            total: (1.0 - alpha) * accuracy + alpha * capacity + regularization,
            alpha,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
    }
}

/// `Σ_i p_i σ(r̂_ij)` for one item.
pub fn expected_usage(model: &LatentModel, propensities: &[f64], item: usize) -> f64 {
    let terms: Vec<f64> = propensities
        .iter()
        .enumerate()
        .map(|(i, &p)| p * sigmoid(model.predict(i, item)))
        .collect();
    pairwise_sum(&terms)
}

/// Expected usage of every item from a precomputed score matrix.
pub fn expected_usages(scores: &ScoreMatrix, propensities: &[f64]) -> Vec<f64> {
    (0..scores.num_items())
        .into_par_iter()
        .map(|j| {
            let terms: Vec<f64> = propensities
                .iter()
                .enumerate()
                .map(|(i, &p)| p * sigmoid(scores.get(i, j)))
                .collect();
            pairwise_sum(&terms)
        })
        .collect()
}

/// `(1/N) Σ_j ℓ(c_j − usage_j)`
pub fn capacity_term_from_usage(usage: &[f64], capacities: &[f64], kind: SurrogateKind) -> f64 {
    if usage.is_empty() {
        return 0.0;
    }
    let losses: Vec<f64> = usage
        .iter()
        .zip(capacities)
        .map(|(&u, &c)| surrogate_loss(kind, c - u))
        .collect();
    pairwise_sum(&losses) / usage.len() as f64
}

pub fn capacity_term(model: &LatentModel, ctx: &ContextVectors, kind: SurrogateKind) -> f64 {
    let usage = expected_usages(&model.score_matrix(), ctx.propensities());
    capacity_term_from_usage(&usage, ctx.capacities(), kind)
}

/// `r̂` for every stored entry of `data`, aligned with its entry indices.
pub fn entry_scores(model: &LatentModel, data: &RatingsDataset) -> Vec<f64> {
    let per_user: Vec<Vec<f64>> = (0..data.num_users())
        .into_par_iter()
        .map(|u| {
            data.user_entries(u)
                .map(|e| model.predict(u, data.entry_item(e)))
                .collect()
        })
        .collect();
    per_user.concat()
}

/// Users whose positive or negative list is empty; they add nothing to the
/// pairwise loss.
pub fn bpr_degenerate_users(data: &RatingsDataset) -> usize {
    (0..data.num_users())
        .filter(|&u| data.positives(u).next().is_none() || data.negatives(u).next().is_none())
        .count()
}

/// Whether the BPR pair (user, positive item, negative item) is part of a
/// subsampled objective keeping about `fraction` of all pairs. The choice is
/// a fixed hash of the triple, so every evaluation sees the same pairs.
pub fn bpr_pair_kept(user: usize, pos: usize, neg: usize, fraction: f64) -> bool {
    if fraction >= 1.0 {
        return true;
    }
    let mut h = (user as u64) ^ (pos as u64).rotate_left(21) ^ (neg as u64).rotate_left(42);
    // splitmix64 finalizer
    h = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^= h >> 31;
    ((h >> 11) as f64 / (1u64 << 53) as f64) < fraction
}

/// Accuracy term from precomputed entry scores.
pub(crate) fn accuracy_from_scores(data: &RatingsDataset, scores: &[f64], kind: AccuracyKind, pair_fraction: f64) -> f64 {
    let per_user: Vec<f64> = (0..data.num_users())
        .into_par_iter()
        .map(|u| {
            let range = data.user_entries(u);
            match kind {
                AccuracyKind::Square => range
                    .map(|e| {
                        let err = data.entry_value(e) - scores[e];
                        err * err
                    })
                    .sum(),
                AccuracyKind::Bpr => {
                    let (pos, neg): (Vec<usize>, Vec<usize>) =
                        range.partition(|&e| data.entry_value(e) > 0.0);
                    let neg: Vec<usize> = neg.into_iter().filter(|&e| data.entry_value(e) < 0.0).collect();
                    let mut total = 0.0;
                    for &k in &pos {
                        for &j in &neg {
                            if bpr_pair_kept(u, data.entry_item(k), data.entry_item(j), pair_fraction) {
                                total += softplus(-(scores[k] - scores[j]));
                            }
                        }
                    }
                    total
                }
            }
        })
        .collect();
    pairwise_sum(&per_user)
}

/// `Σ_i Σ_{j∈L_i} (r_ij − r̂_ij)²` or
/// `Σ_i Σ_{k∈L_i⁺} Σ_{j∈L_i⁻} log(1 + exp(−(r̂_ik − r̂_ij)))`.
pub fn accuracy_term(model: &LatentModel, data: &RatingsDataset, kind: AccuracyKind) -> f64 {
    if kind == AccuracyKind::Bpr {
        let degenerate = bpr_degenerate_users(data);
        if degenerate > 0 {
            warn!("{degenerate} user(s) lack positives or negatives and add nothing to the BPR term");
        }
    }
    accuracy_from_scores(data, &entry_scores(model, data), kind, 1.0)
}

/// Trade-off and regularization weights of the objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveWeights {
    pub alpha: f64,
    pub lambda: f64,
    pub surrogate: SurrogateKind,
    pub accuracy: AccuracyKind,
    /// Share of (positive, negative) pairs kept in the BPR term; 1 keeps all.
    pub bpr_pair_fraction: f64,
}

pub(crate) fn check_shapes(model: &LatentModel, data: &RatingsDataset, ctx: Option<&ContextVectors>) -> Result<()> {
    if model.num_users() != data.num_users() || model.num_items() != data.num_items() {
        return Err(Error::invalid(format!(
            "model is {}x{}, data is {}x{}",
            model.num_users(),
            model.num_items(),
            data.num_users(),
            data.num_items()
        )));
    }
    if let Some(ctx) = ctx {
        if ctx.num_users() != model.num_users() || ctx.num_items() != model.num_items() {
            return Err(Error::invalid(format!(
                "context is {}x{}, model is {}x{}",
                ctx.num_users(),
                ctx.num_items(),
                model.num_users(),
                model.num_items()
            )));
        }
    }
    Ok(())
}

/// Evaluates every term of the objective at `model`.
pub fn objective_value(
    model: &LatentModel,
    data: &RatingsDataset,
    ctx: &ContextVectors,
    weights: &ObjectiveWeights,
) -> Result<ObjectiveBreakdown> {
    check_shapes(model, data, Some(ctx))?;
    let accuracy = accuracy_from_scores(data, &entry_scores(model, data), weights.accuracy, weights.bpr_pair_fraction);
    let capacity = capacity_term(model, ctx, weights.surrogate);
    let regularization = weights.lambda * model.frobenius_sq();
    Ok(ObjectiveBreakdown::combine(weights.alpha, accuracy, capacity, regularization))
}
