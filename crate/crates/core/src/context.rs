//! User propensities and item capacities.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::dataset::RatingsDataset;
use crate::error::{Error, Result};

/// Smallest capacity handed out by the linear spreads.
pub const LINEAR_CAPACITY_FLOOR: f64 = 1e-6;

const MEDIAN_HIGH: f64 = 0.45;
const MEDIAN_LOW: f64 = 0.01;
const LINEAR_PROPENSITY_MAX: f64 = 0.6;

/// Propensity vector `p` (one entry per user) and capacity vector `c` (one
/// entry per item).
#[derive(Clone, Debug, PartialEq)]
pub struct ContextVectors {
    propensities: Vec<f64>,
    capacities: Vec<f64>,
}

impl ContextVectors {
    pub fn new(propensities: Vec<f64>, capacities: Vec<f64>) -> Result<Self> {
        if let Some((i, p)) = propensities
            .iter()
            .enumerate()
            .find(|(_, p)| !(0.0..=1.0).contains(*p))
        {
            return Err(Error::invalid(format!("propensity p[{i}] = {p} outside [0, 1]")));
        }
        if let Some((j, c)) = capacities
            .iter()
            .enumerate()
            .find(|(_, c)| !(**c > 0.0) || !c.is_finite())
        {
            return Err(Error::invalid(format!("capacity c[{j}] = {c} must be > 0")));
        }
        Ok(ContextVectors {
            propensities,
            capacities,
        })
    }

    pub fn propensities(&self) -> &[f64] {
        &self.propensities
    }

    pub fn capacities(&self) -> &[f64] {
        &self.capacities
    }

    pub fn num_users(&self) -> usize {
        self.propensities.len()
    }

    pub fn num_items(&self) -> usize {
        self.capacities.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CapacityKind {
    /// Number of training users who rated the item.
    Actual,
    /// Actual capacities bucketed to 5 / 50 / 150.
    Binning,
    /// Every item gets the same capacity.
    Uniform(f64),
    /// Linear spread over `[0, max actual]` in actual-capacity order.
    LinearMax,
    /// Linear spread over `[0, 2 * mean actual]` in actual-capacity order.
    LinearMean,
    /// Actual capacities bucketed to 150 / 50 / 5.
    ReverseBinning,
}

impl fmt::Display for CapacityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CapacityKind::Actual => f.write_str("actual"),
            CapacityKind::Binning => f.write_str("binning"),
            CapacityKind::Uniform(k) => write!(f, "uniform-{k}"),
            CapacityKind::LinearMax => f.write_str("linear-max"),
            CapacityKind::LinearMean => f.write_str("linear-mean"),
            CapacityKind::ReverseBinning => f.write_str("reverse-binning"),
        }
    }
}

impl FromStr for CapacityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let kind = match s {
            "actual" => CapacityKind::Actual,
            "binning" => CapacityKind::Binning,
            "linear-max" | "linear_max" => CapacityKind::LinearMax,
            "linear-mean" | "linear_mean" => CapacityKind::LinearMean,
            "reverse-binning" | "reverse_binning" => CapacityKind::ReverseBinning,
            other => {
                let k = other
                    .strip_prefix("uniform-")
                    .or_else(|| other.strip_prefix("uniform_"))
                    .and_then(|k| k.parse::<f64>().ok())
                    .ok_or_else(|| Error::invalid(format!("unknown capacity kind `{other}`")))?;
                if !(k > 0.0) || !k.is_finite() {
                    return Err(Error::invalid(format!("uniform capacity must be > 0, got {k}")));
                }
                CapacityKind::Uniform(k)
            }
        };
        Ok(kind)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PropensityKind {
    /// `|L_i| / N` on the training split.
    Actual,
    /// 0.45 at or above the median actual propensity, 0.01 below.
    Median,
    /// Linear spread over `[0, 0.6]` in actual-propensity order.
    Linear,
}

impl fmt::Display for PropensityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PropensityKind::Actual => "actual",
            PropensityKind::Median => "median",
            PropensityKind::Linear => "linear",
        })
    }
}

impl FromStr for PropensityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "actual" => Ok(PropensityKind::Actual),
            "median" => Ok(PropensityKind::Median),
            "linear" => Ok(PropensityKind::Linear),
            other => Err(Error::invalid(format!("unknown propensity kind `{other}`"))),
        }
    }
}

fn bin(actual: f64, low: f64, mid: f64, high: f64) -> f64 {
    if actual <= 20.0 {
        low
    } else if actual <= 100.0 {
        mid
    } else {
        high
    }
}

/// Positions `0..n` assigned in ascending `values` order, ties by index.
fn ascending_ranks(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut rank = vec![0; values.len()];
    for (t, idx) in order.into_iter().enumerate() {
        rank[idx] = t;
    }
    rank
}

fn linear_spread(values: &[f64], top: f64) -> Vec<f64> {
    let n = values.len();
    if n == 1 {
        return vec![top];
    }
    ascending_ranks(values)
        .into_iter()
        .map(|t| t as f64 / (n - 1) as f64 * top)
        .collect()
}

/// Item capacities synthesized from the training split.
pub fn make_capacities(train: &RatingsDataset, kind: CapacityKind) -> Result<Vec<f64>> {
    if train.is_empty() || train.num_items() == 0 {
        return Err(Error::invalid("cannot derive capacities from an empty dataset"));
    }
    let actual: Vec<f64> = (0..train.num_items())
        .map(|j| train.item_count(j) as f64)
        .collect();
    let caps = match kind {
        CapacityKind::Actual => actual,
        CapacityKind::Binning => actual.iter().map(|&a| bin(a, 5.0, 50.0, 150.0)).collect(),
        CapacityKind::ReverseBinning => actual.iter().map(|&a| bin(a, 150.0, 50.0, 5.0)).collect(),
        CapacityKind::Uniform(k) => {
            if !(k > 0.0) {
                return Err(Error::invalid(format!("uniform capacity must be > 0, got {k}")));
            }
            vec![k; actual.len()]
        }
        CapacityKind::LinearMax => {
            let max = actual.iter().cloned().fold(0.0, f64::max);
            linear_spread(&actual, max)
        }
        CapacityKind::LinearMean => {
            let mean = actual.iter().sum::<f64>() / actual.len() as f64;
            linear_spread(&actual, 2.0 * mean)
        }
    };
    // Unrated items (actual 0) and the bottom of the linear spreads would
    // otherwise get a zero capacity.
    Ok(caps.into_iter().map(|c| c.max(LINEAR_CAPACITY_FLOOR)).collect())
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// User propensities synthesized from the training split.
pub fn make_propensities(train: &RatingsDataset, kind: PropensityKind) -> Result<Vec<f64>> {
    if train.is_empty() || train.num_users() == 0 {
        return Err(Error::invalid("cannot derive propensities from an empty dataset"));
    }
    let n = train.num_items() as f64;
    let actual: Vec<f64> = (0..train.num_users())
        .map(|i| train.user_count(i) as f64 / n)
        .collect();
    Ok(match kind {
        PropensityKind::Actual => actual,
        PropensityKind::Median => {
            let m = median(&actual);
            actual
                .iter()
                .map(|&p| if p >= m { MEDIAN_HIGH } else { MEDIAN_LOW })
                .collect()
        }
        PropensityKind::Linear => linear_spread(&actual, LINEAR_PROPENSITY_MAX),
    })
}

/// Builds both vectors in one go.
pub fn make_context(
    train: &RatingsDataset,
    capacity: CapacityKind,
    propensity: PropensityKind,
) -> Result<ContextVectors> {
    ContextVectors::new(
        make_propensities(train, propensity)?,
        make_capacities(train, capacity)?,
    )
}

/// Writes `index,value` rows under an `index,value` header.
pub fn write_vector_csv(path: &Path, values: &[f64]) -> Result<()> {
    let mut out = Vec::with_capacity(values.len() * 16);
    writeln!(out, "index,value").unwrap();
    for (i, v) in values.iter().enumerate() {
        writeln!(out, "{i},{v:?}").unwrap();
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads an `index,value` CSV (header optional). Indices must cover
/// `0..len` exactly once.
pub fn read_vector_csv(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut entries = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (n == 0 && line.starts_with("index")) {
            continue;
        }
        let (idx, val) = line
            .split_once(',')
            .ok_or_else(|| parse_err(n + 1, "expected `index,value`".into()))?;
        let idx: usize = idx
            .trim()
            .parse()
            .map_err(|e| parse_err(n + 1, format!("bad index: {e}")))?;
        let val: f64 = val
            .trim()
            .parse()
            .map_err(|e| parse_err(n + 1, format!("bad value: {e}")))?;
        entries.push((idx, val, n + 1));
    }
    let mut values = vec![f64::NAN; entries.len()];
    for (idx, val, line) in entries {
        if idx >= values.len() || !values[idx].is_nan() {
            return Err(parse_err(line, format!("index {idx} out of range or repeated")));
        }
        values[idx] = val;
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{FeedbackMode, Rating};

    /// Item `j` is rated by `counts[j]` distinct users.
    fn with_item_counts(counts: &[usize]) -> RatingsDataset {
        let users = counts.iter().copied().max().unwrap_or(0).max(1);
        let ratings = counts
            .iter()
            .enumerate()
            .flat_map(|(j, &c)| (0..c).map(move |u| Rating::new(u, j, 1.0)))
            .collect();
        RatingsDataset::new(users, counts.len(), ratings, FeedbackMode::Implicit01).unwrap()
    }

    /// User `i` rates `counts[i]` distinct items.
    fn with_user_counts(counts: &[usize], items: usize) -> RatingsDataset {
        let ratings = counts
            .iter()
            .enumerate()
            .flat_map(|(i, &c)| (0..c).map(move |j| Rating::new(i, j, 1.0)))
            .collect();
        RatingsDataset::new(counts.len(), items, ratings, FeedbackMode::Implicit01).unwrap()
    }

    #[test]
    fn actual_capacity_counts_raters() {
        let d = with_item_counts(&[42, 3]);
        assert_eq!(make_capacities(&d, CapacityKind::Actual).unwrap(), vec![42.0, 3.0]);
    }

    #[test]
    fn binning_and_reverse() {
        let d = with_item_counts(&[15, 20, 21, 100, 101, 200]);
        let b = make_capacities(&d, CapacityKind::Binning).unwrap();
        assert_eq!(b, vec![5.0, 5.0, 50.0, 50.0, 150.0, 150.0]);
        let r = make_capacities(&d, CapacityKind::ReverseBinning).unwrap();
        assert_eq!(r, vec![150.0, 150.0, 50.0, 50.0, 5.0, 5.0]);
        // Bins swap order: a larger binned capacity is a smaller reversed one.
        for a in 0..b.len() {
            for c in 0..b.len() {
                if b[a] < b[c] {
                    assert!(r[a] > r[c]);
                }
            }
        }
    }

    #[test]
    fn uniform_capacity() {
        let d = with_item_counts(&[1, 2, 3]);
        assert_eq!(
            make_capacities(&d, CapacityKind::Uniform(10.0)).unwrap(),
            vec![10.0; 3]
        );
        assert!("uniform-0".parse::<CapacityKind>().is_err());
        assert_eq!(
            "uniform-10".parse::<CapacityKind>().unwrap(),
            CapacityKind::Uniform(10.0)
        );
    }

    #[test]
    fn linear_spreads_follow_usage_order() {
        let d = with_item_counts(&[8, 2, 8, 4, 0]);
        let lm = make_capacities(&d, CapacityKind::LinearMax).unwrap();
        // ascending order: item4 (0), item1 (2), item3 (4), item0 (8), item2 (8)
        assert_eq!(lm, vec![6.0, 2.0, 8.0, 4.0, LINEAR_CAPACITY_FLOOR]);
        let mean = (8.0 + 2.0 + 8.0 + 4.0) / 5.0;
        let lmean = make_capacities(&d, CapacityKind::LinearMean).unwrap();
        assert!((lmean[2] - 2.0 * mean).abs() < 1e-12);
        assert!(lmean.iter().all(|&c| c > 0.0));
    }

    #[test]
    fn single_item_linear_gets_max() {
        let d = with_item_counts(&[7]);
        assert_eq!(make_capacities(&d, CapacityKind::LinearMax).unwrap(), vec![7.0]);
    }

    #[test]
    fn actual_propensity() {
        let d = with_user_counts(&[100, 1], 1682);
        let p = make_propensities(&d, PropensityKind::Actual).unwrap();
        assert!((p[0] - 100.0 / 1682.0).abs() < 1e-15);
        assert!((p[0] - 0.05945).abs() < 1e-5);
    }

    #[test]
    fn median_propensity_two_levels() {
        let d = with_user_counts(&[1, 2, 3, 4, 3], 10);
        let p = make_propensities(&d, PropensityKind::Median).unwrap();
        // median of actual = 0.3; ties go high
        assert_eq!(p, vec![0.01, 0.01, 0.45, 0.45, 0.45]);
    }

    #[test]
    fn linear_propensity_range() {
        let d = with_user_counts(&[5, 1, 3, 2], 10);
        let p = make_propensities(&d, PropensityKind::Linear).unwrap();
        assert_eq!(p.iter().cloned().fold(f64::MIN, f64::max), 0.6);
        assert_eq!(p.iter().cloned().fold(f64::MAX, f64::min), 0.0);
        assert!((p[0] - 0.6).abs() < 1e-15 && p[1] == 0.0);
    }

    #[test]
    fn context_validation() {
        assert!(ContextVectors::new(vec![1.2], vec![1.0]).is_err());
        assert!(ContextVectors::new(vec![0.2], vec![0.0]).is_err());
        assert!(ContextVectors::new(vec![0.0, 1.0], vec![0.5]).is_ok());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let v = vec![1.5, 0.1 + 0.2, 1e-6];
        write_vector_csv(&path, &v).unwrap();
        assert_eq!(read_vector_csv(&path).unwrap(), v);
        std::fs::write(&path, "0,1\n0,2\n").unwrap();
        assert!(read_vector_csv(&path).is_err());
    }
}
