//! Web-Mercator tiling of POI coordinates and the kernel-density influence
//! matrix `Y` used by the geographical models.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Zoom level used for POI tiling.
pub const DEFAULT_LEVEL: u8 = 15;

/// Latitude bound of the square Web-Mercator world.
pub const MAX_LATITUDE: f64 = 85.051_128_78;

/// Influence entries below this are dropped from the sparse columns.
pub const INFLUENCE_CUTOFF: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TileCoord {
    pub x: u32,
    pub y: u32,
    pub level: u8,
}

impl TileCoord {
    /// Number of tiles along one axis at this tile's level.
    pub fn tiles_per_axis(&self) -> u64 {
        1u64 << self.level
    }

    fn center(&self) -> (f64, f64) {
        (self.x as f64 + 0.5, self.y as f64 + 0.5)
    }
}

/// Maps a coordinate to its tile. Latitudes beyond the Mercator domain are
/// clamped to `±MAX_LATITUDE`.
pub fn latlon_to_tile(lat: f64, lon: f64, level: u8) -> Result<TileCoord> {
    if lat.is_nan() || lon.is_nan() {
        return Err(Error::invalid("NaN coordinate"));
    }
    if !(-180.0..=180.0).contains(&lon) {
        return Err(Error::invalid(format!("longitude {lon} outside [-180, 180]")));
    }
    if level > 31 {
        return Err(Error::invalid(format!("tile level {level} too deep")));
    }
    let lat = lat.clamp(-MAX_LATITUDE, MAX_LATITUDE);
    let sin_lat = lat.to_radians().sin();
    let x_norm = (lon + 180.0) / 360.0;
    let y_norm = 0.5 - ((1.0 + sin_lat) / (1.0 - sin_lat)).ln() / (4.0 * PI);

    let size = (1u64 << level) as f64;
    let to_tile = |norm: f64| (norm * size).floor().clamp(0.0, size - 1.0) as u32;
    Ok(TileCoord {
        x: to_tile(x_norm),
        y: to_tile(y_norm),
        level,
    })
}

/// Standard Gaussian density.
pub fn gaussian_kernel(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Influence of a POI on a tile at distance `distance` (tile units).
pub fn influence(distance: f64, bandwidth: f64) -> f64 {
    gaussian_kernel(distance / bandwidth) / bandwidth
}

/// Sparse `L' x N` influence matrix: one column per POI, one row per
/// occupied tile.
#[derive(Clone, Debug, PartialEq)]
pub struct InfluenceMatrix {
    tiles: Vec<TileCoord>,
    /// Per POI, `(row, value)` pairs with ascending rows.
    columns: Vec<Vec<(usize, f64)>>,
    bandwidth: f64,
}

impl InfluenceMatrix {
    /// Assembles a matrix from explicit columns; used by checkpoint loading
    /// and tests. Entries must be non-negative and rows in range.
    pub fn from_columns(
        tiles: Vec<TileCoord>,
        columns: Vec<Vec<(usize, f64)>>,
        bandwidth: f64,
    ) -> Result<Self> {
        let rows = tiles.len();
        for (j, col) in columns.iter().enumerate() {
            for w in col.windows(2) {
                if w[0].0 >= w[1].0 {
                    return Err(Error::invalid(format!("column {j} rows not ascending")));
                }
            }
            for &(r, v) in col {
                if r >= rows || !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::invalid(format!(
                        "bad influence entry ({r}, {j}) = {v}"
                    )));
                }
            }
        }
        Ok(InfluenceMatrix {
            tiles,
            columns,
            bandwidth,
        })
    }

    /// `L'`
    pub fn num_tiles(&self) -> usize {
        self.tiles.len()
    }

    pub fn num_pois(&self) -> usize {
        self.columns.len()
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Occupied tiles in row order.
    pub fn tiles(&self) -> &[TileCoord] {
        &self.tiles
    }

    pub fn column(&self, poi: usize) -> &[(usize, f64)] {
        &self.columns[poi]
    }

    pub fn get(&self, row: usize, poi: usize) -> f64 {
        let col = &self.columns[poi];
        match col.binary_search_by_key(&row, |&(r, _)| r) {
            Ok(k) => col[k].1,
            Err(_) => 0.0,
        }
    }

    /// `x^T y_j`
    pub fn dot_column(&self, poi: usize, x: &[f64]) -> f64 {
        self.columns[poi].iter().map(|&(r, v)| v * x[r]).sum()
    }

    /// `out += scale * y_j`
    pub fn add_column(&self, poi: usize, scale: f64, out: &mut [f64]) {
        for &(r, v) in &self.columns[poi] {
            out[r] += scale * v;
        }
    }

    /// Non-zero entries as `(row, col, value)`.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.columns
            .iter()
            .enumerate()
            .flat_map(|(j, col)| col.iter().map(move |&(r, v)| (r, j, v)))
    }

    /// Dense row-major copy (`L' x N`).
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.num_pois();
        let mut out = vec![0.0; self.num_tiles() * n];
        for (r, j, v) in self.triplets() {
            out[r * n + j] = v;
        }
        out
    }
}

/// Builds `Y` from the tile of each POI (`pois[j]` is POI `j`'s tile).
///
/// Rows are the distinct occupied tiles in ascending `(x, y)` order. Entry
/// `(l, j)` is the Gaussian kernel of the distance between the centers of
/// tile `l` and POI `j`'s tile, scaled by the bandwidth.
pub fn build_influence_matrix(pois: &[TileCoord], bandwidth: f64) -> Result<InfluenceMatrix> {
    if pois.is_empty() {
        return Err(Error::invalid("no POIs to build an influence matrix from"));
    }
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(Error::invalid(format!("bandwidth must be > 0, got {bandwidth}")));
    }
    let level = pois[0].level;
    if pois.iter().any(|t| t.level != level) {
        return Err(Error::invalid("POI tiles at mixed levels"));
    }

    let mut rows: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    for t in pois {
        rows.insert((t.x, t.y), 0);
    }
    for (r, slot) in rows.values_mut().enumerate() {
        *slot = r;
    }
    let tiles: Vec<TileCoord> = rows.keys().map(|&(x, y)| TileCoord { x, y, level }).collect();

    let columns = pois
        .par_iter()
        .map(|poi| {
            let (px, py) = poi.center();
            tiles
                .iter()
                .enumerate()
                .filter_map(|(r, tile)| {
                    let (tx, ty) = tile.center();
                    let value = influence((px - tx).hypot(py - ty), bandwidth);
                    (value >= INFLUENCE_CUTOFF).then_some((r, value))
                })
                .collect()
        })
        .collect();

    Ok(InfluenceMatrix {
        tiles,
        columns,
        bandwidth,
    })
}

/// Sparse dump with header `row,col,value`.
pub fn write_influence_csv(path: &Path, y: &InfluenceMatrix) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "row,col,value").unwrap();
    for (r, j, v) in y.triplets() {
        writeln!(out, "{r},{j},{v:?}").unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
