//! Binary model checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic      8 bytes  "CAPMFCK1"
//! M, N, k, L'         u64 each (L' = 0 for non-geo models)
//! geo flag   u8
//! config     32 bytes (hash of the producing configuration)
//! U          k x M   f64, row-major
//! V          k x N   f64, row-major
//! -- geo only --
//! X          L' x M  f64, row-major
//! Y          L' x N  f64, row-major
//! bandwidth  f64
//! level      u8
//! tiles      L' x (u32 x, u32 y)
//! ```

use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geo::{InfluenceMatrix, TileCoord};
use crate::model::{Factors, GeoFactors, LatentModel};

const MAGIC: &[u8; 8] = b"CAPMFCK1";

fn put_matrix_row_major(out: &mut Vec<u8>, f: &Factors) {
    for r in 0..f.dim() {
        for c in 0..f.count() {
            out.extend_from_slice(&f.get(r, c).to_le_bytes());
        }
    }
}

pub fn encode(model: &LatentModel, config_hash: &[u8; 32]) -> Vec<u8> {
    let (m, n, k, l) = (model.num_users(), model.num_items(), model.rank(), model.geo_dim());
    let mut out = Vec::with_capacity(64 + 8 * (k + l) * (m + n));
    out.extend_from_slice(MAGIC);
    for v in [m, n, k, l] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    out.push(model.is_geo() as u8);
    out.extend_from_slice(config_hash);
    put_matrix_row_major(&mut out, &model.users);
    put_matrix_row_major(&mut out, &model.items);
    if let Some(g) = &model.geo {
        put_matrix_row_major(&mut out, &g.activity);
        for v in g.influence.to_dense() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&g.influence.bandwidth().to_le_bytes());
        let level = g.influence.tiles().first().map_or(0, |t| t.level);
        out.push(level);
        for t in g.influence.tiles() {
            out.extend_from_slice(&t.x.to_le_bytes());
            out.extend_from_slice(&t.y.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| Error::Checkpoint("dimension overflow".into()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn row_major(&mut self, rows: usize, cols: usize) -> Result<Factors> {
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Checkpoint("dimension overflow".into()))?;
        if len.saturating_mul(8) > self.bytes.len() - self.pos {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let mut data = vec![0.0; len];
        for r in 0..rows {
            for c in 0..cols {
                data[c * rows + r] = self.f64()?;
            }
        }
        Factors::from_columns(rows, cols, data)
    }
}

/// Decodes a checkpoint into the model and the stored configuration hash.
pub fn decode(bytes: &[u8]) -> Result<(LatentModel, [u8; 32])> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let (m, n, k, l) = (r.u64()?, r.u64()?, r.u64()?, r.u64()?);
    let geo = match r.take(1)?[0] {
        0 => false,
        1 => true,
        other => return Err(Error::Checkpoint(format!("bad geo flag {other}"))),
    };
    let hash: [u8; 32] = r.take(32)?.try_into().unwrap();
    let users = r.row_major(k, m)?;
    let items = r.row_major(k, n)?;
    let geo = if geo {
        let activity = r.row_major(l, m)?;
        let dense = r.row_major(l, n)?;
        let bandwidth = r.f64()?;
        let level = r.take(1)?[0];
        let tiles = (0..l)
            .map(|_| Ok(TileCoord { x: r.u32()?, y: r.u32()?, level }))
            .collect::<Result<Vec<_>>>()?;
        let columns = (0..n)
            .map(|j| {
                dense
                    .col(j)
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(row, &v)| (row, v))
                    .collect()
            })
            .collect();
        let influence = InfluenceMatrix::from_columns(tiles, columns, bandwidth)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        Some(GeoFactors {
            activity,
            influence: Arc::new(influence),
        })
    } else {
        None
    };
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok((LatentModel::new(users, items, geo)?, hash))
}

pub fn save(path: &Path, model: &LatentModel, config_hash: &[u8; 32]) -> Result<()> {
    fs::write(path, encode(model, config_hash)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<(LatentModel, [u8; 32])> {
    decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::build_influence_matrix;
    use proptest::prelude::*;

    fn model(m: usize, n: usize, k: usize, seed: u64, geo: bool) -> LatentModel {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let users = Factors::gaussian(k, m, 1.0, &mut rng);
        let items = Factors::gaussian(k, n, 1.0, &mut rng);
        let geo = geo.then(|| {
            let tiles: Vec<TileCoord> = (0..n)
                .map(|j| TileCoord {
                    x: (j % 3) as u32,
                    y: (j / 3) as u32,
                    level: 15,
                })
                .collect();
            let y = build_influence_matrix(&tiles, 1.5).unwrap();
            GeoFactors {
                activity: Factors::gaussian(y.num_tiles(), m, 1.0, &mut rng),
                influence: Arc::new(y),
            }
        });
        LatentModel::new(users, items, geo).unwrap()
    }

    proptest! {
        #[test]
        fn round_trip(m in 1usize..6, n in 1usize..7, k in 1usize..4, seed: u64, geo: bool, tag: [u8; 32]) {
            let original = model(m, n, k, seed, geo);
            let (decoded, hash) = decode(&encode(&original, &tag)).unwrap();
            prop_assert_eq!(hash, tag);
            prop_assert_eq!(decoded, original);
        }
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&model(2, 3, 4, 1, false), &[7; 32]);
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[24..32].try_into().unwrap()), 4);
        assert_eq!(bytes[40], 0);
        assert_eq!(bytes.len(), 8 + 32 + 1 + 32 + 8 * 4 * (2 + 3));
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let bytes = encode(&model(2, 3, 2, 1, true), &[0; 32]);
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(decode(&long).is_err());
    }
}
