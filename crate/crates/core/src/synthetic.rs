//! Synthetic interaction logs with planted low-rank structure, written in the
//! same text formats as the real datasets.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::ingest::RawInteraction;
use crate::numeric::dot;

#[derive(Clone, Debug, PartialEq)]
pub struct PlantedSpec {
    pub users: usize,
    pub items: usize,
    pub rank: usize,
    /// Interactions per user are drawn uniformly from this range.
    pub min_per_user: usize,
    pub max_per_user: usize,
    /// Standard deviation of the planted affinity `u*_i · v*_j`.
    pub signal: f64,
    /// Standard deviation of the per-item popularity offset.
    pub popularity: f64,
    /// Scale of the Gumbel noise in the choice model; larger spreads the
    /// interactions more evenly over the items.
    pub temperature: f64,
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        PlantedSpec {
            users: 200,
            items: 300,
            rank: 5,
            min_per_user: 40,
            max_per_user: 100,
            signal: 2.0,
            popularity: 1.0,
            temperature: 1.0,
            seed: 42,
        }
    }
}

/// Each user interacts with the items of highest planted affinity
/// `u*_i · v*_j + b_j` perturbed by Gumbel noise, i.e. a draw without
/// replacement from the softmax of the affinities. The value is a 1–5 star rating derived from
/// the affinity, so the log also works as explicit feedback.
pub fn planted_interactions(spec: &PlantedSpec) -> Result<Vec<RawInteraction>> {
    if spec.min_per_user > spec.max_per_user || spec.max_per_user > spec.items || spec.rank == 0 {
        return Err(Error::invalid("inconsistent planted dataset spec"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let scale = (spec.signal / (spec.rank as f64).sqrt()).sqrt();
    let draw = |n: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..n).map(|_| unit.sample(rng) * scale).collect()
    };
    let users: Vec<Vec<f64>> = (0..spec.users).map(|_| draw(spec.rank, &mut rng)).collect();
    let items: Vec<Vec<f64>> = (0..spec.items).map(|_| draw(spec.rank, &mut rng)).collect();
    let bias: Vec<f64> = (0..spec.items)
        .map(|_| unit.sample(&mut rng) * spec.popularity)
        .collect();

    let mut out = Vec::new();
    for (i, u) in users.iter().enumerate() {
        let count = rng.random_range(spec.min_per_user..=spec.max_per_user);
        let mut scored: Vec<(f64, usize)> = items
            .iter()
            .enumerate()
            .map(|(j, v)| {
                let gumbel = -(-rng.random::<f64>().max(f64::MIN_POSITIVE).ln()).ln();
                (dot(u, v) + bias[j] + spec.temperature * gumbel, j)
            })
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, j) in scored.iter().take(count) {
            let affinity = dot(u, &items[j]);
            let stars = (3.5 + 1.5 * affinity / spec.signal.max(f64::MIN_POSITIVE)).round().clamp(1.0, 5.0);
            out.push(RawInteraction {
                user_id: format!("u{i}"),
                item_id: format!("i{j}"),
                value: stars,
                lat: None,
                lon: None,
            });
        }
    }
    Ok(out)
}

/// POI coordinates scattered around a few city-sized clusters.
pub fn planted_pois(items: usize, clusters: usize, seed: u64) -> Vec<(String, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x706f_6973);
    let spread = Normal::new(0.0, 0.02).unwrap();
    let centers: Vec<(f64, f64)> = (0..clusters.max(1))
        .map(|_| (rng.random_range(-60.0..60.0), rng.random_range(-170.0..170.0)))
        .collect();
    (0..items)
        .map(|j| {
            let (lat, lon) = centers[j % centers.len()];
            (
                format!("i{j}"),
                (lat + spread.sample(&mut rng)).clamp(-90.0, 90.0),
                (lon + spread.sample(&mut rng)).clamp(-180.0, 180.0),
            )
        })
        .collect()
}

/// `user<TAB>item<TAB>rating<TAB>timestamp`, timestamp fixed to 0.
pub fn write_movielens_tab(path: &Path, rows: &[RawInteraction]) -> Result<()> {
    let mut out = Vec::new();
    for r in rows {
        writeln!(out, "{}\t{}\t{}\t0", r.user_id, r.item_id, r.value).unwrap();
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// `user<TAB>item<TAB>1`
pub fn write_checkins(path: &Path, rows: &[RawInteraction]) -> Result<()> {
    let mut out = Vec::new();
    for r in rows {
        writeln!(out, "{}\t{}\t1", r.user_id, r.item_id).unwrap();
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// `item<TAB>lat<TAB>lon`
pub fn write_pois(path: &Path, pois: &[(String, f64, f64)]) -> Result<()> {
    let mut out = Vec::new();
    for (id, lat, lon) in pois {
        writeln!(out, "{id}\t{lat}\t{lon}").unwrap();
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
