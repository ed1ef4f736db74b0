//! Python bindings: datasets, context vectors, training, metrics and the
//! post-processing baseline.

use std::path::PathBuf;
use std::sync::Arc;

use capmf::context::make_context;
use capmf::eval::{self, rank_all};
use capmf::geo::{build_influence_matrix, latlon_to_tile as tile_of};
use capmf::objective::surrogate_loss as loss;
use capmf::synthetic::{planted_interactions, PlantedSpec};
use capmf::{
    checkpoint, AccuracyKind, CapacityKind, ContextVectors, FeedbackMode, InfluenceMatrix, LatentModel,
    PropensityKind, Rating, RatingsDataset, ScoreMatrix, SurrogateKind, TileCoord, TrainConfig,
};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse<T: std::str::FromStr>(s: &str) -> PyResult<T>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(err)
}

/// Sparse ratings; `(user, item, value)` triples with 0-based indices.
#[pyclass(name = "Dataset", frozen)]
struct PyDataset(RatingsDataset);

#[pymethods]
impl PyDataset {
    #[new]
    #[pyo3(signature = (num_users, num_items, triples, feedback = "implicit01"))]
    fn new(num_users: usize, num_items: usize, triples: Vec<(usize, usize, f64)>, feedback: &str) -> PyResult<Self> {
        let ratings = triples.into_iter().map(|(u, i, v)| Rating::new(u, i, v)).collect();
        let mode: FeedbackMode = parse(feedback)?;
        RatingsDataset::new(num_users, num_items, ratings, mode).map(PyDataset).map_err(err)
    }

    #[getter]
    fn num_users(&self) -> usize {
        self.0.num_users()
    }

    #[getter]
    fn num_items(&self) -> usize {
        self.0.num_items()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn triples(&self) -> Vec<(usize, usize, f64)> {
        self.0.ratings().map(|r| (r.user, r.item, r.value)).collect()
    }

    fn __repr__(&self) -> String {
        format!("Dataset({}x{}, {} ratings, {})", self.0.num_users(), self.0.num_items(), self.0.len(), self.0.feedback())
    }
}

/// Per-user propensities and per-item capacities.
#[pyclass(name = "Context", frozen)]
struct PyContext(ContextVectors);

#[pymethods]
impl PyContext {
    #[new]
    fn new(propensities: Vec<f64>, capacities: Vec<f64>) -> PyResult<Self> {
        ContextVectors::new(propensities, capacities).map(PyContext).map_err(err)
    }

    /// Builds the vectors from training counts, e.g. `capacity="binning"`.
    #[staticmethod]
    #[pyo3(signature = (train, capacity = "actual", propensity = "actual"))]
    fn from_train(train: &PyDataset, capacity: &str, propensity: &str) -> PyResult<Self> {
        let c: CapacityKind = parse(capacity)?;
        let p: PropensityKind = parse(propensity)?;
        make_context(&train.0, c, p).map(PyContext).map_err(err)
    }

    #[getter]
    fn propensities(&self) -> Vec<f64> {
        self.0.propensities().to_vec()
    }

    #[getter]
    fn capacities(&self) -> Vec<f64> {
        self.0.capacities().to_vec()
    }
}

/// A trained (or loaded) latent factor model.
#[pyclass(name = "Model", frozen)]
struct PyModel {
    model: LatentModel,
    #[pyo3(get)]
    iterations: usize,
    #[pyo3(get)]
    stop_reason: String,
    #[pyo3(get)]
    objective: Vec<f64>,
}

impl PyModel {
    fn plain(model: LatentModel) -> Self {
        PyModel {
            model,
            iterations: 0,
            stop_reason: String::new(),
            objective: Vec::new(),
        }
    }
}

/// Tiles and influence matrix for POI coordinates `(lat, lon)` per item.
fn influence_for(pois: Vec<(f64, f64)>, bandwidth: f64) -> PyResult<Arc<InfluenceMatrix>> {
    let tiles = pois
        .into_iter()
        .map(|(lat, lon)| tile_of(lat, lon, capmf::geo::DEFAULT_LEVEL))
        .collect::<capmf::Result<Vec<TileCoord>>>()
        .map_err(err)?;
    build_influence_matrix(&tiles, bandwidth).map(Arc::new).map_err(err)
}

#[pymethods]
impl PyModel {
    /// Trains a capacity-constrained model. `alpha = 0` gives plain PMF /
    /// BPR; passing `pois` (one `(lat, lon)` per item) adds the
    /// geographical part.
    #[staticmethod]
    #[allow(clippy::too_many_arguments)]
    #[pyo3(signature = (
        train, context, alpha = 0.2, accuracy = "square", surrogate = "logistic", rank = 10,
        lam = 1e-5, max_iters = 3000, tol = 1e-5, seed = 0, pois = None, bandwidth = 1.0
    ))]
    fn train(
        py: Python<'_>,
        train: &PyDataset,
        context: &PyContext,
        alpha: f64,
        accuracy: &str,
        surrogate: &str,
        rank: usize,
        lam: f64,
        max_iters: usize,
        tol: f64,
        seed: u64,
        pois: Option<Vec<(f64, f64)>>,
        bandwidth: f64,
    ) -> PyResult<Self> {
        let influence = pois.map(|p| influence_for(p, bandwidth)).transpose()?;
        let cfg = TrainConfig {
            alpha,
            lambda: lam,
            rank,
            surrogate: parse(surrogate)?,
            accuracy: parse(accuracy)?,
            geo: influence.is_some(),
            max_iters,
            tol,
            seed,
            ..TrainConfig::default()
        };
        let (data, ctx) = (&train.0, &context.0);
        let (model, trace) = py
            .detach(|| capmf::train(data, ctx, &cfg, influence))
            .map_err(err)?;
        Ok(PyModel {
            model,
            iterations: trace.iterations,
            stop_reason: trace.stop_reason.to_string(),
            objective: trace.objectives.iter().map(|b| b.total).collect(),
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        checkpoint::load(&path).map(|(m, _)| PyModel::plain(m)).map_err(err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        checkpoint::save(&path, &self.model, &[0; 32]).map_err(err)
    }

    fn predict(&self, user: usize, item: usize) -> PyResult<f64> {
        self.model.predict_rating(user, item).map_err(err)
    }

    /// Dense `num_users x num_items` scores as nested lists.
    fn scores(&self) -> Vec<Vec<f64>> {
        let s = self.model.score_matrix();
        (0..s.num_users()).map(|u| s.row(u).to_vec()).collect()
    }

    #[getter]
    fn rank(&self) -> usize {
        self.model.rank()
    }

    #[getter]
    fn is_geo(&self) -> bool {
        self.model.is_geo()
    }

    /// Expected usage `Σ_i p_i σ(r̂_ij)` of every item.
    fn expected_usage(&self, context: &PyContext) -> Vec<f64> {
        capmf::objective::expected_usages(&self.model.score_matrix(), context.0.propensities())
    }

    #[pyo3(signature = (context, surrogate = "logistic"))]
    fn capacity_loss(&self, context: &PyContext, surrogate: &str) -> PyResult<f64> {
        Ok(eval::capacity_loss_metric(&self.model, &context.0, parse(surrogate)?))
    }

    /// All test metrics as a dict; top-k metrics are keyed `map@k` etc.
    #[pyo3(signature = (test, context, accuracy = "square", surrogate = "logistic", alpha = 0.0, tops = vec![1, 5, 10]))]
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        test: &PyDataset,
        context: &PyContext,
        accuracy: &str,
        surrogate: &str,
        alpha: f64,
        tops: Vec<usize>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let kind: AccuracyKind = parse(accuracy)?;
        let s: SurrogateKind = parse(surrogate)?;
        let r = eval::evaluate(&self.model, &test.0, &context.0, kind, s, alpha, &tops).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("rmse", r.rmse)?;
        d.set_item("pairwise01", r.pairwise01)?;
        d.set_item("capacity_loss", r.capacity_loss)?;
        d.set_item("overall", r.overall)?;
        for (name, map) in [("map", &r.map_at), ("wap", &r.wap_at), ("wmcv", &r.wmcv_at)] {
            for (k, v) in map {
                d.set_item(format!("{name}@{k}"), v)?;
            }
        }
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!(
            "Model({}x{}, rank {}, geo={})",
            self.model.num_users(),
            self.model.num_items(),
            self.model.rank(),
            self.model.is_geo()
        )
    }
}

fn score_matrix(scores: Vec<Vec<f64>>) -> PyResult<ScoreMatrix> {
    let m = scores.len();
    let n = scores.first().map_or(0, Vec::len);
    if scores.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("ragged score matrix"));
    }
    ScoreMatrix::from_rows(m, n, scores.into_iter().flatten().collect()).map_err(err)
}

/// Top-`k` lists after giving each item only to its `⌊c_j⌋` best users.
#[pyfunction]
fn post_process_baseline(scores: Vec<Vec<f64>>, context: &PyContext, k: usize) -> PyResult<Vec<Vec<usize>>> {
    Ok(eval::post_process_baseline(&score_matrix(scores)?, &context.0, k, None).lists)
}

/// Every item ranked per user, best first.
#[pyfunction]
fn rank_items(scores: Vec<Vec<f64>>) -> PyResult<Vec<Vec<usize>>> {
    Ok(rank_all(&score_matrix(scores)?).lists)
}

#[pyfunction]
fn wmcv(lists: Vec<Vec<usize>>, context: &PyContext, k: usize) -> f64 {
    eval::wmcv_at_k(&eval::RankedList { lists }, &context.0, k)
}

#[pyfunction]
fn surrogate_loss(kind: &str, delta: f64) -> PyResult<f64> {
    Ok(loss(parse(kind)?, delta))
}

#[pyfunction]
#[pyo3(signature = (lat, lon, level = 15))]
fn latlon_to_tile(lat: f64, lon: f64, level: u8) -> PyResult<(u32, u32)> {
    tile_of(lat, lon, level).map(|t| (t.x, t.y)).map_err(err)
}

/// Synthetic log with planted rank-`rank` structure, as
/// `(user_id, item_id, stars)` tuples.
#[pyfunction]
#[pyo3(signature = (users = 200, items = 300, rank = 5, seed = 42))]
fn planted(users: usize, items: usize, rank: usize, seed: u64) -> PyResult<Vec<(String, String, f64)>> {
    let spec = PlantedSpec {
        users,
        items,
        rank,
        seed,
        min_per_user: PlantedSpec::default().min_per_user.min(items),
        max_per_user: PlantedSpec::default().max_per_user.min(items),
        ..PlantedSpec::default()
    };
    planted_interactions(&spec)
        .map(|rows| rows.into_iter().map(|r| (r.user_id, r.item_id, r.value)).collect())
        .map_err(err)
}

#[pymodule]
fn capmf_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyContext>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(post_process_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(rank_items, m)?)?;
    m.add_function(wrap_pyfunction!(wmcv, m)?)?;
    m.add_function(wrap_pyfunction!(surrogate_loss, m)?)?;
    m.add_function(wrap_pyfunction!(latlon_to_tile, m)?)?;
    m.add_function(wrap_pyfunction!(planted, m)?)?;
    Ok(())
}
