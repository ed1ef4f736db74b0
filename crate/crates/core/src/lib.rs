//! Capacity-constrained latent factor recommendation.
//!
//! Matrix factorization (PMF), Bayesian personalized ranking (BPR) and their
//! geographical variants, each trained with an extra penalty that keeps the
//! propensity-weighted expected usage of every item below its capacity. The
//! trade-off weight `alpha` moves a model from the plain recommender
//! (`alpha = 0`) to one that only cares about capacities (`alpha = 1`).
//!
//! The crate also carries the data pipeline (parsing, filtering, splitting,
//! negative sampling), the synthesis of capacity and propensity vectors, the
//! Web-Mercator/KDE influence matrix for POI data, the evaluation metrics and
//! a post-processing baseline.

pub mod checkpoint;
pub mod context;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod geo;
pub mod ingest;
pub mod model;
pub mod numeric;
pub mod objective;
pub mod synthetic;
pub mod train;

pub use context::{CapacityKind, ContextVectors, PropensityKind};
pub use dataset::{FeedbackMode, Rating, RatingsDataset};
pub use error::{Error, Result};
pub use eval::{MetricsReport, RankedList};
pub use geo::{InfluenceMatrix, TileCoord};
pub use model::{Factors, GeoFactors, LatentModel, ScoreMatrix};
pub use objective::{AccuracyKind, ObjectiveBreakdown, ObjectiveWeights, SurrogateKind};
pub use train::{train, train_unconstrained, TrainConfig, TrainTrace};
