//! Latent factor matrices and rating prediction.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geo::InfluenceMatrix;
use crate::numeric::{dot, squared_norm};

/// A `dim x count` matrix stored column by column, so each factor vector
/// (`u_i`, `v_j`, `x_i`) is one contiguous slice.
#[derive(Clone, Debug, PartialEq)]
pub struct Factors {
    dim: usize,
    count: usize,
    data: Vec<f64>,
}

impl Factors {
    pub fn zeros(dim: usize, count: usize) -> Self {
        Factors {
            dim,
            count,
            data: vec![0.0; dim * count],
        }
    }

    /// Column-major `data`, `dim * count` long.
    pub fn from_columns(dim: usize, count: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * count {
            return Err(Error::invalid(format!(
                "factor data has {} values, expected {dim}x{count}",
                data.len()
            )));
        }
        Ok(Factors { dim, count, data })
    }

    /// Entries drawn i.i.d. from `N(0, scale^2)`, column by column.
    pub fn gaussian<R: Rng + ?Sized>(dim: usize, count: usize, scale: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, scale).expect("init scale must be finite and >= 0");
        let data = (0..dim * count).map(|_| normal.sample(rng)).collect();
        Factors { dim, count, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn col(&self, c: usize) -> &[f64] {
        &self.data[c * self.dim..(c + 1) * self.dim]
    }

    pub fn col_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.dim..(c + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn frobenius_sq(&self) -> f64 {
        squared_norm(&self.data)
    }

    /// Element `(row, col)`.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[col * self.dim + row]
    }
}

/// User activity `X` together with the fixed POI influence `Y`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeoFactors {
    pub activity: Factors,
    pub influence: Arc<InfluenceMatrix>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatentModel {
    pub users: Factors,
    pub items: Factors,
    pub geo: Option<GeoFactors>,
}

impl LatentModel {
    pub fn new(users: Factors, items: Factors, geo: Option<GeoFactors>) -> Result<Self> {
        if users.dim() != items.dim() {
            return Err(Error::invalid(format!(
                "user rank {} != item rank {}",
                users.dim(),
                items.dim()
            )));
        }
        if let Some(g) = &geo {
            if g.activity.dim() != g.influence.num_tiles() {
                return Err(Error::invalid(format!(
                    "activity dimension {} != influence rows {}",
                    g.activity.dim(),
                    g.influence.num_tiles()
                )));
            }
            if g.activity.count() != users.count() || g.influence.num_pois() != items.count() {
                return Err(Error::invalid("geo factors do not match user/item counts"));
            }
        }
        Ok(LatentModel { users, items, geo })
    }

    pub fn zeros(num_users: usize, num_items: usize, rank: usize) -> Self {
        LatentModel {
            users: Factors::zeros(rank, num_users),
            items: Factors::zeros(rank, num_items),
            geo: None,
        }
    }

    pub fn num_users(&self) -> usize {
        self.users.count()
    }

    pub fn num_items(&self) -> usize {
        self.items.count()
    }

    pub fn rank(&self) -> usize {
        self.users.dim()
    }

    /// `L'`, or 0 for a non-geographical model.
    pub fn geo_dim(&self) -> usize {
        self.geo.as_ref().map_or(0, |g| g.activity.dim())
    }

    pub fn is_geo(&self) -> bool {
        self.geo.is_some()
    }

    /// `u_i^T v_j`, plus `x_i^T y_j` for a geographical model.
    ///
    /// Panics on out-of-range indices.
    pub fn predict(&self, user: usize, item: usize) -> f64 {
        assert!(
            user < self.num_users() && item < self.num_items(),
            "index ({user}, {item}) outside a {}x{} model",
            self.num_users(),
            self.num_items()
        );
        let base = dot(self.users.col(user), self.items.col(item));
        match &self.geo {
            Some(g) => base + g.influence.dot_column(item, g.activity.col(user)),
            None => base,
        }
    }

    /// Checked variant of [`LatentModel::predict`].
    pub fn predict_rating(&self, user: usize, item: usize) -> Result<f64> {
        if user >= self.num_users() || item >= self.num_items() {
            return Err(Error::invalid(format!(
                "index ({user}, {item}) outside a {}x{} model",
                self.num_users(),
                self.num_items()
            )));
        }
        Ok(self.predict(user, item))
    }

    /// Full `M x N` score matrix, row-major by user.
    pub fn score_matrix(&self) -> ScoreMatrix {
        use rayon::prelude::*;
        let n = self.num_items();
        let mut scores = vec![0.0; self.num_users() * n];
        if n > 0 {
            scores
                .par_chunks_mut(n)
                .enumerate()
                .for_each(|(i, row)| {
                    for (j, s) in row.iter_mut().enumerate() {
                        *s = self.predict(i, j);
                    }
                });
        }
        ScoreMatrix {
            num_users: self.num_users(),
            num_items: n,
            scores,
        }
    }

    /// `‖U‖² + ‖V‖² (+ ‖X‖²)`
    pub fn frobenius_sq(&self) -> f64 {
        let geo = self.geo.as_ref().map_or(0.0, |g| g.activity.frobenius_sq());
        self.users.frobenius_sq() + self.items.frobenius_sq() + geo
    }
}

/// Dense predicted scores `r̂_ij`, row-major by user.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix {
    num_users: usize,
    num_items: usize,
    scores: Vec<f64>,
}

impl ScoreMatrix {
    pub fn from_rows(num_users: usize, num_items: usize, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != num_users * num_items {
            return Err(Error::invalid("score matrix size mismatch"));
        }
        Ok(ScoreMatrix {
            num_users,
            num_items,
            scores,
        })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn get(&self, user: usize, item: usize) -> f64 {
        self.scores[user * self.num_items + item]
    }

    pub fn row(&self, user: usize) -> &[f64] {
        &self.scores[user * self.num_items..(user + 1) * self.num_items]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::TileCoord;

    fn scalar_model(u: f64, v: f64) -> LatentModel {
        LatentModel::new(
            Factors::from_columns(1, 1, vec![u]).unwrap(),
            Factors::from_columns(1, 1, vec![v]).unwrap(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn zero_model_predicts_zero() {
        let m = LatentModel::zeros(3, 4, 5);
        assert_eq!(m.predict(2, 3), 0.0);
    }

    #[test]
    fn scalar_product() {
        assert_eq!(scalar_model(2.0, 3.0).predict(0, 0), 6.0);
    }

    #[test]
    fn geo_term_is_added() {
        let tile = TileCoord { x: 0, y: 0, level: 15 };
        let y = InfluenceMatrix::from_columns(vec![tile], vec![vec![(0, 0.25)]], 1.0).unwrap();
        let mut m = scalar_model(2.0, 3.0);
        m.geo = Some(GeoFactors {
            activity: Factors::from_columns(1, 1, vec![2.0]).unwrap(),
            influence: Arc::new(y),
        });
        assert_eq!(m.predict(0, 0), 6.5);
    }

    #[test]
    fn out_of_range_is_an_error() {
        let m = LatentModel::zeros(2, 2, 1);
        assert!(m.predict_rating(2, 0).is_err());
        assert!(m.predict_rating(0, 2).is_err());
    }

    #[test]
    fn prediction_is_linear_in_user_factor() {
        let mut rng = rand::rng();
        let mut m = LatentModel::new(
            Factors::gaussian(4, 3, 1.0, &mut rng),
            Factors::gaussian(4, 5, 1.0, &mut rng),
            None,
        )
        .unwrap();
        let before = m.predict(1, 2);
        for x in m.users.col_mut(1) {
            *x *= 2.0;
        }
        assert!((m.predict(1, 2) - 2.0 * before).abs() < 1e-12);
    }
}
