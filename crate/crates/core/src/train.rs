//! Alternating block gradient descent with Adagrad step sizes.
//!
//! Each iteration updates every `u_i` from the gradient at `(U, V, X)`, then
//! every `v_j` at the new `U`, then (geo models) every `x_i` at the new `U`
//! and `V`. The expected-usage slack `Δ_j` is recomputed at the start of
//! each block and held fixed within it.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use log::{debug, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::context::ContextVectors;
use crate::dataset::RatingsDataset;
use crate::error::{Error, Result};
use crate::geo::InfluenceMatrix;
use crate::model::{Factors, GeoFactors, LatentModel, ScoreMatrix};
use crate::numeric::{axpy, sigmoid, sigmoid_slope, squared_norm};
use crate::objective::{
    accuracy_from_scores, bpr_degenerate_users, bpr_pair_kept, capacity_term_from_usage, check_shapes, entry_scores,
    expected_usages, surrogate_slope, AccuracyKind, ObjectiveBreakdown, ObjectiveWeights, SurrogateKind,
};

/// Per-vector gradient norm bound applied with the exponential surrogate.
pub const EXPONENTIAL_CLIP_NORM: f64 = 1e3;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Weight of the capacity term; `1 − alpha` weighs accuracy.
    pub alpha: f64,
    pub lambda: f64,
    pub rank: usize,
    pub surrogate: SurrogateKind,
    pub accuracy: AccuracyKind,
    pub geo: bool,
    pub max_iters: usize,
    /// Stop once consecutive objective values differ by less than this.
    pub tol: f64,
    pub seed: u64,
    pub adagrad_epsilon: f64,
    /// Standard deviation of the Gaussian factor initialization.
    pub init_scale: f64,
    /// Share of BPR pairs kept in the objective (1 = full sum).
    pub bpr_pair_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 0.2,
            lambda: 1e-5,
            rank: 10,
            surrogate: SurrogateKind::Logistic,
            accuracy: AccuracyKind::Square,
            geo: false,
            max_iters: 3000,
            tol: 1e-5,
            seed: 0,
            adagrad_epsilon: 1e-8,
            init_scale: 0.1,
            bpr_pair_fraction: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::invalid(format!("lambda {} must be >= 0", self.lambda)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid(format!("tol {} must be > 0", self.tol)));
        }
        if self.rank == 0 {
            return Err(Error::invalid("rank must be >= 1"));
        }
        if !(self.adagrad_epsilon > 0.0) {
            return Err(Error::invalid("adagrad epsilon must be > 0"));
        }
        if !(self.bpr_pair_fraction > 0.0 && self.bpr_pair_fraction <= 1.0) {
            return Err(Error::invalid(format!("bpr pair fraction {} outside (0, 1]", self.bpr_pair_fraction)));
        }
        if !(self.init_scale >= 0.0) || !self.init_scale.is_finite() {
            return Err(Error::invalid("init scale must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn weights(&self) -> ObjectiveWeights {
        ObjectiveWeights {
            alpha: self.alpha,
            lambda: self.lambda,
            surrogate: self.surrogate,
            accuracy: self.accuracy,
            bpr_pair_fraction: self.bpr_pair_fraction,
        }
    }
}

/// Adagrad accumulators for one parameter block.
#[derive(Clone, Debug, PartialEq)]
pub struct AdagradState {
    accumulator: Vec<f64>,
    epsilon: f64,
}

impl AdagradState {
    pub fn new(len: usize, epsilon: f64) -> Self {
        AdagradState {
            accumulator: vec![0.0; len],
            epsilon,
        }
    }

    pub fn accumulator(&self) -> &[f64] {
        &self.accumulator
    }

    /// Adds `g²` to the accumulator, then moves each coordinate by
    /// `−g / (ε + sqrt(accumulator))`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(params.len(), grad.len());
        let eps = self.epsilon;
        params
            .iter_mut()
            .zip(grad)
            .zip(self.accumulator.iter_mut())
            .for_each(|((p, &g), acc)| {
                *acc += g * g;
                *p -= g / (eps + acc.sqrt());
            });
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    MaxIters,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::Converged => "converged",
            StopReason::MaxIters => "max_iters",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainTrace {
    /// Objective at the initial point followed by one entry per iteration.
    pub objectives: Vec<ObjectiveBreakdown>,
    pub stop_reason: StopReason,
    pub iterations: usize,
    /// Gradient vectors rescaled to [`EXPONENTIAL_CLIP_NORM`].
    pub clipped: usize,
}

impl TrainTrace {
    pub fn last(&self) -> &ObjectiveBreakdown {
        self.objectives.last().expect("trace always holds the initial objective")
    }

    /// CSV with header `iter,accuracy,capacity,regularization,total`.
    pub fn to_csv(&self) -> String {
        let mut out = Vec::new();
        writeln!(out, "iter,accuracy,capacity,regularization,total").unwrap();
        for (t, b) in self.objectives.iter().enumerate() {
            writeln!(
                out,
                "{t},{:?},{:?},{:?},{:?}",
                b.accuracy_term, b.capacity_term, b.regularization_term, b.total
            )
            .unwrap();
        }
        String::from_utf8(out).unwrap()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Which factor vector a gradient is taken with respect to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FactorRef {
    User(usize),
    Item(usize),
    Activity(usize),
}

/// `∂ accuracy / ∂ r̂` for every stored entry, aligned with entry indices.
///
/// Every accuracy gradient is a sum of these coefficients times the factor
/// on the other side of the dot product.
fn entry_coefficients(data: &RatingsDataset, scores: &[f64], kind: AccuracyKind, pair_fraction: f64) -> Vec<f64> {
    let per_user: Vec<Vec<f64>> = (0..data.num_users())
        .into_par_iter()
        .map(|u| {
            let range = data.user_entries(u);
            match kind {
                AccuracyKind::Square => range.map(|e| -2.0 * (data.entry_value(e) - scores[e])).collect(),
                AccuracyKind::Bpr => {
                    let start = range.start;
                    let mut coef = vec![0.0; range.len()];
                    let pos: Vec<usize> = range.clone().filter(|&e| data.entry_value(e) > 0.0).collect();
                    let neg: Vec<usize> = range.filter(|&e| data.entry_value(e) < 0.0).collect();
                    for &k in &pos {
                        for &j in &neg {
                            if !bpr_pair_kept(u, data.entry_item(k), data.entry_item(j), pair_fraction) {
                                continue;
                            }
                            let s = sigmoid(-(scores[k] - scores[j]));
                            coef[k - start] -= s;
                            coef[j - start] += s;
                        }
                    }
                    coef
                }
            }
        })
        .collect();
    per_user.concat()
}

/// Capacity pieces fixed for one block: the score matrix and
/// `w_j = −ℓ'(c_j − E[usage(j)])`.
struct CapacityState {
    scores: ScoreMatrix,
    slope: Vec<f64>,
}

impl CapacityState {
    fn new(model: &LatentModel, ctx: &ContextVectors, kind: SurrogateKind) -> Self {
        let scores = model.score_matrix();
        let slope = expected_usages(&scores, ctx.propensities())
            .iter()
            .zip(ctx.capacities())
            .map(|(&u, &c)| surrogate_slope(kind, c - u))
            .collect();
        CapacityState { scores, slope }
    }
}

/// Everything a block gradient needs, evaluated at one model.
struct BlockState<'a> {
    data: &'a RatingsDataset,
    /// Present when the accuracy term carries weight.
    coefficients: Option<Vec<f64>>,
    /// Present when the capacity term carries weight.
    capacity: Option<(CapacityState, &'a ContextVectors)>,
    weights: ObjectiveWeights,
}

impl<'a> BlockState<'a> {
    fn new(
        model: &LatentModel,
        data: &'a RatingsDataset,
        ctx: Option<&'a ContextVectors>,
        weights: ObjectiveWeights,
    ) -> Self {
        let coefficients = (weights.alpha < 1.0)
            .then(|| entry_coefficients(data, &entry_scores(model, data), weights.accuracy, weights.bpr_pair_fraction));
        let capacity = match ctx {
            Some(ctx) if weights.alpha > 0.0 => Some((CapacityState::new(model, ctx, weights.surrogate), ctx)),
            _ => None,
        };
        BlockState {
            data,
            coefficients,
            capacity,
            weights,
        }
    }

    fn capacity_scale(&self) -> f64 {
        self.weights.alpha / self.data.num_items() as f64
    }

    fn user_gradient(&self, model: &LatentModel, user: usize, out: &mut [f64]) {
        out.fill(0.0);
        let alpha = self.weights.alpha;
        if let Some(coef) = &self.coefficients {
            for e in self.data.user_entries(user) {
                axpy((1.0 - alpha) * coef[e], model.items.col(self.data.entry_item(e)), out);
            }
        }
        if let Some((cap, ctx)) = &self.capacity {
            let p = ctx.propensities()[user];
            if p != 0.0 {
                let scale = self.capacity_scale() * p;
                let row = cap.scores.row(user);
                for (j, &r) in row.iter().enumerate() {
                    axpy(scale * cap.slope[j] * sigmoid_slope(r), model.items.col(j), out);
                }
            }
        }
        axpy(2.0 * self.weights.lambda, model.users.col(user), out);
    }

    fn item_gradient(&self, model: &LatentModel, item: usize, out: &mut [f64]) {
        out.fill(0.0);
        let alpha = self.weights.alpha;
        if let Some(coef) = &self.coefficients {
            for &e in self.data.item_entries(item) {
                axpy((1.0 - alpha) * coef[e], model.users.col(self.data.entry_user(e)), out);
            }
        }
        if let Some((cap, ctx)) = &self.capacity {
            let w = cap.slope[item];
            if w != 0.0 {
                let scale = self.capacity_scale() * w;
                for (i, &p) in ctx.propensities().iter().enumerate() {
                    axpy(scale * p * sigmoid_slope(cap.scores.get(i, item)), model.users.col(i), out);
                }
            }
        }
        axpy(2.0 * self.weights.lambda, model.items.col(item), out);
    }

    fn activity_gradient(&self, model: &LatentModel, user: usize, out: &mut [f64]) {
        let geo = model.geo.as_ref().expect("activity gradient on a geo model");
        let y = &geo.influence;
        out.fill(0.0);
        let alpha = self.weights.alpha;
        if let Some(coef) = &self.coefficients {
            for e in self.data.user_entries(user) {
                y.add_column(self.data.entry_item(e), (1.0 - alpha) * coef[e], out);
            }
        }
        if let Some((cap, ctx)) = &self.capacity {
            let p = ctx.propensities()[user];
            if p != 0.0 {
                let scale = self.capacity_scale() * p;
                for (j, &r) in cap.scores.row(user).iter().enumerate() {
                    y.add_column(j, scale * cap.slope[j] * sigmoid_slope(r), out);
                }
            }
        }
        axpy(2.0 * self.weights.lambda, geo.activity.col(user), out);
    }
}

fn block_gradient(
    dim: usize,
    count: usize,
    f: impl Fn(usize, &mut [f64]) + Sync + Send,
) -> Vec<f64> {
    let mut grad = vec![0.0; dim * count];
    if dim > 0 {
        grad.par_chunks_mut(dim).enumerate().for_each(|(c, out)| f(c, out));
    }
    grad
}

/// Full gradient of the objective, all blocks taken at the same point.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGradient {
    pub users: Factors,
    pub items: Factors,
    pub activity: Option<Factors>,
}

pub fn objective_gradient(
    model: &LatentModel,
    data: &RatingsDataset,
    ctx: &ContextVectors,
    weights: &ObjectiveWeights,
) -> Result<ModelGradient> {
    check_shapes(model, data, Some(ctx))?;
    let state = BlockState::new(model, data, Some(ctx), *weights);
    let k = model.rank();
    let users = block_gradient(k, model.num_users(), |i, out| state.user_gradient(model, i, out));
    let items = block_gradient(k, model.num_items(), |j, out| state.item_gradient(model, j, out));
    let activity = model.geo.as_ref().map(|g| {
        let grad = block_gradient(g.activity.dim(), model.num_users(), |i, out| {
            state.activity_gradient(model, i, out)
        });
        Factors::from_columns(g.activity.dim(), model.num_users(), grad).unwrap()
    });
    Ok(ModelGradient {
        users: Factors::from_columns(k, model.num_users(), users)?,
        items: Factors::from_columns(k, model.num_items(), items)?,
        activity,
    })
}

/// `(1/N) Σ_j w_j σ'(r̂_ij) p_i · factor_j` for every item `j`.
fn capacity_vector(
    model: &LatentModel,
    ctx: &ContextVectors,
    kind: SurrogateKind,
    dim: usize,
    contribution: impl Fn(&mut [f64], usize, f64),
) -> Vec<f64> {
    let state = CapacityState::new(model, ctx, kind);
    let mut out = vec![0.0; dim];
    for j in 0..model.num_items() {
        contribution(&mut out, j, state.slope[j]);
    }
    let n = model.num_items() as f64;
    out.iter_mut().for_each(|v| *v /= n);
    out
}

/// Capacity part of `∇_{u_i}`, without the `α` factor:
/// `(1/N) Σ_j w_j · p_i · σ(r̂_ij)σ(−r̂_ij) · v_j`, where `w_j` is the
/// surrogate slope at `c_j − E[usage(j)]` (`σ(−Δ_j)` for the logistic loss).
pub fn grad_capacity_u(model: &LatentModel, ctx: &ContextVectors, kind: SurrogateKind, user: usize) -> Vec<f64> {
    let p = ctx.propensities()[user];
    capacity_vector(model, ctx, kind, model.rank(), |out, j, w| {
        axpy(w * p * sigmoid_slope(model.predict(user, j)), model.items.col(j), out)
    })
}

/// Capacity part of `∇_{v_j}`: `(1/N) w_j Σ_i p_i σ'(r̂_ij) u_i`.
pub fn grad_capacity_v(model: &LatentModel, ctx: &ContextVectors, kind: SurrogateKind, item: usize) -> Vec<f64> {
    let w = CapacityState::new(model, ctx, kind).slope[item];
    let mut out = capacity_usage_sum(model, ctx.propensities(), item);
    let scale = w / model.num_items() as f64;
    out.iter_mut().for_each(|v| *v *= scale);
    out
}

/// `Σ_i p_i σ'(r̂_ij) u_i`, the inner sum of the item capacity gradient.
pub fn capacity_usage_sum(model: &LatentModel, propensities: &[f64], item: usize) -> Vec<f64> {
    let mut out = vec![0.0; model.rank()];
    for (i, &p) in propensities.iter().enumerate() {
        axpy(p * sigmoid_slope(model.predict(i, item)), model.users.col(i), &mut out);
    }
    out
}

/// Capacity part of `∇_{x_i}`: `(1/N) Σ_j w_j p_i σ'(r̂_ij) y_j`.
pub fn grad_capacity_x(
    model: &LatentModel,
    ctx: &ContextVectors,
    kind: SurrogateKind,
    user: usize,
) -> Result<Vec<f64>> {
    let geo = model
        .geo
        .as_ref()
        .ok_or_else(|| Error::invalid("activity gradient requested on a non-geographical model"))?;
    let p = ctx.propensities()[user];
    Ok(capacity_vector(model, ctx, kind, geo.activity.dim(), |out, j, w| {
        geo.influence
            .add_column(j, w * p * sigmoid_slope(model.predict(user, j)), out)
    }))
}

/// Gradient of the (unweighted) accuracy term with respect to one factor.
pub fn grad_accuracy(
    model: &LatentModel,
    data: &RatingsDataset,
    kind: AccuracyKind,
    which: FactorRef,
) -> Result<Vec<f64>> {
    check_shapes(model, data, None)?;
    let coef = entry_coefficients(data, &entry_scores(model, data), kind, 1.0);
    let mut out;
    match which {
        FactorRef::User(i) => {
            out = vec![0.0; model.rank()];
            for e in data.user_entries(i) {
                axpy(coef[e], model.items.col(data.entry_item(e)), &mut out);
            }
        }
        FactorRef::Item(j) => {
            out = vec![0.0; model.rank()];
            for &e in data.item_entries(j) {
                axpy(coef[e], model.users.col(data.entry_user(e)), &mut out);
            }
        }
        FactorRef::Activity(i) => {
            let geo = model
                .geo
                .as_ref()
                .ok_or_else(|| Error::invalid("activity gradient requested on a non-geographical model"))?;
            out = vec![0.0; geo.activity.dim()];
            for e in data.user_entries(i) {
                geo.influence.add_column(data.entry_item(e), coef[e], &mut out);
            }
        }
    }
    Ok(out)
}

/// Objective at `model` as reported in the trace. The capacity term is only
/// evaluated when it carries weight; with `α = 0` it is reported as 0.
fn trace_objective(
    model: &LatentModel,
    data: &RatingsDataset,
    ctx: Option<&ContextVectors>,
    weights: &ObjectiveWeights,
) -> ObjectiveBreakdown {
    let accuracy = accuracy_from_scores(data, &entry_scores(model, data), weights.accuracy, weights.bpr_pair_fraction);
    let capacity = match ctx {
        Some(ctx) if weights.alpha > 0.0 => {
            let usage = expected_usages(&model.score_matrix(), ctx.propensities());
            capacity_term_from_usage(&usage, ctx.capacities(), weights.surrogate)
        }
        _ => 0.0,
    };
    ObjectiveBreakdown::combine(weights.alpha, accuracy, capacity, weights.lambda * model.frobenius_sq())
}

fn clip(grad: &mut [f64], dim: usize) -> usize {
    if dim == 0 {
        return 0;
    }
    let mut clipped = 0;
    for v in grad.chunks_mut(dim) {
        let norm = squared_norm(v).sqrt();
        if norm > EXPONENTIAL_CLIP_NORM {
            let s = EXPONENTIAL_CLIP_NORM / norm;
            v.iter_mut().for_each(|x| *x *= s);
            clipped += 1;
        }
    }
    clipped
}

/// Initial factors: `U`, then `V`, then `X`, each i.i.d. `N(0, init_scale²)`
/// from one seeded stream.
pub fn initial_model(
    num_users: usize,
    num_items: usize,
    cfg: &TrainConfig,
    influence: Option<Arc<InfluenceMatrix>>,
) -> Result<LatentModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let users = Factors::gaussian(cfg.rank, num_users, cfg.init_scale, &mut rng);
    let items = Factors::gaussian(cfg.rank, num_items, cfg.init_scale, &mut rng);
    let geo = influence.map(|y| GeoFactors {
        activity: Factors::gaussian(y.num_tiles(), num_users, cfg.init_scale, &mut rng),
        influence: y,
    });
    LatentModel::new(users, items, geo)
}

fn run(
    data: &RatingsDataset,
    ctx: Option<&ContextVectors>,
    cfg: &TrainConfig,
    weights: ObjectiveWeights,
    influence: Option<Arc<InfluenceMatrix>>,
) -> Result<(LatentModel, TrainTrace)> {
    cfg.validate()?;
    match (&influence, cfg.geo) {
        (None, true) => return Err(Error::invalid("geo training needs an influence matrix")),
        (Some(_), false) => return Err(Error::invalid("influence matrix given but geo is off")),
        _ => {}
    }
    if let Some(y) = &influence {
        if y.num_pois() != data.num_items() {
            return Err(Error::invalid(format!(
                "influence matrix has {} POIs, data has {} items",
                y.num_pois(),
                data.num_items()
            )));
        }
    }
    if weights.accuracy == AccuracyKind::Bpr && weights.alpha < 1.0 {
        let degenerate = bpr_degenerate_users(data);
        if degenerate > 0 {
            warn!("{degenerate} user(s) lack positives or negatives and add nothing to the BPR term");
        }
    }

    let mut model = initial_model(data.num_users(), data.num_items(), cfg, influence)?;
    check_shapes(&model, data, ctx)?;
    let k = cfg.rank;
    let mut user_opt = AdagradState::new(k * data.num_users(), cfg.adagrad_epsilon);
    let mut item_opt = AdagradState::new(k * data.num_items(), cfg.adagrad_epsilon);
    let mut activity_opt = model
        .geo
        .as_ref()
        .map(|g| AdagradState::new(g.activity.as_slice().len(), cfg.adagrad_epsilon));
    let clip_enabled = weights.alpha > 0.0 && weights.surrogate == SurrogateKind::Exponential;
    let overflow = |b: &ObjectiveBreakdown| weights.surrogate == SurrogateKind::Exponential && b.capacity_term.is_infinite();

    let mut objectives = vec![trace_objective(&model, data, ctx, &weights)];
    if !objectives[0].is_finite() {
        return Err(Error::NonFiniteObjective {
            iteration: 0,
            overflow: overflow(&objectives[0]),
        });
    }
    let mut clipped = 0;
    let mut stop_reason = StopReason::MaxIters;
    let mut iterations = 0;

    for t in 1..=cfg.max_iters {
        let state = BlockState::new(&model, data, ctx, weights);
        let mut grad = block_gradient(k, data.num_users(), |i, out| state.user_gradient(&model, i, out));
        if clip_enabled {
            clipped += clip(&mut grad, k);
        }
        user_opt.step(model.users.as_mut_slice(), &grad);

        let state = BlockState::new(&model, data, ctx, weights);
        let mut grad = block_gradient(k, data.num_items(), |j, out| state.item_gradient(&model, j, out));
        if clip_enabled {
            clipped += clip(&mut grad, k);
        }
        item_opt.step(model.items.as_mut_slice(), &grad);

        if let Some(opt) = activity_opt.as_mut() {
            let state = BlockState::new(&model, data, ctx, weights);
            let dim = model.geo_dim();
            let mut grad = block_gradient(dim, data.num_users(), |i, out| state.activity_gradient(&model, i, out));
            if clip_enabled {
                clipped += clip(&mut grad, dim);
            }
            let geo = model.geo.as_mut().unwrap();
            opt.step(geo.activity.as_mut_slice(), &grad);
        }

        let current = trace_objective(&model, data, ctx, &weights);
        iterations = t;
        if !current.is_finite() {
            return Err(Error::NonFiniteObjective {
                iteration: t,
                overflow: overflow(&current),
            });
        }
        let previous = objectives.last().unwrap().total;
        objectives.push(current);
        if (previous - current.total).abs() < cfg.tol {
            stop_reason = StopReason::Converged;
            break;
        }
    }
    debug!(
        "training stopped after {iterations} iteration(s): {stop_reason}, objective {:.6}",
        objectives.last().unwrap().total
    );
    if clipped > 0 {
        debug!("{clipped} gradient vector(s) clipped to norm {EXPONENTIAL_CLIP_NORM}");
    }
    Ok((
        model,
        TrainTrace {
            objectives,
            stop_reason,
            iterations,
            clipped,
        },
    ))
}

/// Trains a capacity-constrained model (Cap-PMF, Cap-BPR, Cap-GeoMF or
/// Cap-GeoBPR depending on `cfg.accuracy` and `cfg.geo`).
///
/// `influence` must be given exactly when `cfg.geo` is set.
pub fn train(
    data: &RatingsDataset,
    ctx: &ContextVectors,
    cfg: &TrainConfig,
    influence: Option<Arc<InfluenceMatrix>>,
) -> Result<(LatentModel, TrainTrace)> {
    run(data, Some(ctx), cfg, cfg.weights(), influence)
}

/// Trains the plain PMF / BPR / GeoMF / GeoBPR model; `cfg.alpha` is ignored.
pub fn train_unconstrained(
    data: &RatingsDataset,
    cfg: &TrainConfig,
    influence: Option<Arc<InfluenceMatrix>>,
) -> Result<(LatentModel, TrainTrace)> {
    let weights = ObjectiveWeights {
        alpha: 0.0,
        ..cfg.weights()
    };
    run(data, None, cfg, weights, influence)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{FeedbackMode, Rating};

    fn scalar_model(users: &[f64], items: &[f64]) -> LatentModel {
        LatentModel::new(
            Factors::from_columns(1, users.len(), users.to_vec()).unwrap(),
            Factors::from_columns(1, items.len(), items.to_vec()).unwrap(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn adagrad_accumulates_current_gradient() {
        let mut opt = AdagradState::new(2, 1e-8);
        let mut p = vec![1.0, 1.0];
        opt.step(&mut p, &[2.0, -0.5]);
        // first step moves each coordinate by ~1 against the gradient sign
        assert!((p[0] - 0.0).abs() < 1e-8 && (p[1] - 2.0).abs() < 1e-7);
        let before = opt.accumulator().to_vec();
        opt.step(&mut p, &[1.0, 0.0]);
        assert!(opt.accumulator().iter().zip(&before).all(|(a, b)| a >= b));
        assert_eq!(opt.accumulator(), &[5.0, 0.25]);
    }

    #[test]
    fn zero_propensity_gives_zero_capacity_gradient() {
        let m = scalar_model(&[0.4, -1.0], &[0.3, 2.0]);
        let ctx = ContextVectors::new(vec![0.0, 0.7], vec![0.2, 0.1]).unwrap();
        assert_eq!(grad_capacity_u(&m, &ctx, SurrogateKind::Logistic, 0), vec![0.0]);
        let none = ContextVectors::new(vec![0.0, 0.0], vec![0.2, 0.1]).unwrap();
        assert_eq!(grad_capacity_v(&m, &none, SurrogateKind::Logistic, 1), vec![0.0]);
    }

    #[test]
    fn slack_constraints_have_vanishing_gradient() {
        let m = scalar_model(&[0.4, -1.0], &[0.3, 2.0]);
        let ctx = ContextVectors::new(vec![1.0, 1.0], vec![102.0, 102.0]).unwrap();
        let g = grad_capacity_u(&m, &ctx, SurrogateKind::Logistic, 0);
        assert!(g[0].abs() < 1e-30);
    }

    #[test]
    fn item_gradient_inner_sum_is_linear_in_propensity() {
        let m = scalar_model(&[0.4, -1.0, 0.2], &[0.3, 2.0]);
        let p = [0.1, 0.25, 0.3];
        let p2: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
        let a = capacity_usage_sum(&m, &p, 1);
        let b = capacity_usage_sum(&m, &p2, 1);
        assert_eq!(b[0], 2.0 * a[0]);
    }

    #[test]
    fn activity_gradient_needs_geo() {
        let m = scalar_model(&[0.4], &[0.3]);
        let ctx = ContextVectors::new(vec![0.5], vec![1.0]).unwrap();
        assert!(grad_capacity_x(&m, &ctx, SurrogateKind::Logistic, 0).is_err());
    }

    #[test]
    fn square_gradient_arithmetic() {
        // r = 1, u = 1, v = 0.5: d/du (1 − 0.5)² = −2·0.5·0.5
        let m = scalar_model(&[1.0], &[0.5]);
        let d = RatingsDataset::new(1, 1, vec![Rating::new(0, 0, 1.0)], FeedbackMode::Implicit01).unwrap();
        assert_eq!(grad_accuracy(&m, &d, AccuracyKind::Square, FactorRef::User(0)).unwrap(), vec![-0.5]);
        let perfect = scalar_model(&[1.0], &[1.0]);
        assert_eq!(
            grad_accuracy(&perfect, &d, AccuracyKind::Square, FactorRef::Item(0)).unwrap(),
            vec![0.0]
        );
    }

    #[test]
    fn config_validation() {
        let bad = TrainConfig {
            alpha: 1.5,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            tol: 0.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn geo_flag_requires_influence() {
        let d = RatingsDataset::new(1, 1, vec![Rating::new(0, 0, 1.0)], FeedbackMode::Implicit01).unwrap();
        let ctx = ContextVectors::new(vec![0.5], vec![1.0]).unwrap();
        let cfg = TrainConfig {
            geo: true,
            ..TrainConfig::default()
        };
        assert!(train(&d, &ctx, &cfg, None).is_err());
    }
}
