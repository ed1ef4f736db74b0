//! Reading interaction logs and turning them into train/test datasets.
//!
//! The pipeline is `parse_interactions` → `index_interactions` →
//! `filter_min_ratings` → `polarize` → `split_train_test` →
//! `sample_negatives`.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{FeedbackMode, Rating, RatingsDataset};
use crate::error::{Error, Result};

/// Stream salt so negative sampling never replays the split's random draws.
const NEGATIVE_STREAM_SALT: u64 = 0x6e65_6761_7469_7665;
const TEST_NEGATIVE_STREAM_SALT: u64 = 0x7465_7374_6e65_6773;

#[derive(Clone, Debug, PartialEq)]
pub struct RawInteraction {
    pub user_id: String,
    pub item_id: String,
    pub value: f64,
    pub lat: Option<f64>,
    pub lon: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum InteractionFormat {
    /// `user<TAB>item<TAB>rating<TAB>timestamp`
    MovielensTab,
    /// `user<TAB>item<TAB>1`, coordinates in a companion POI file.
    CheckinTsv,
}

impl fmt::Display for InteractionFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InteractionFormat::MovielensTab => "movielens-tab",
            InteractionFormat::CheckinTsv => "checkin-tsv",
        })
    }
}

impl FromStr for InteractionFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "movielens-tab" => Ok(InteractionFormat::MovielensTab),
            "checkin-tsv" => Ok(InteractionFormat::CheckinTsv),
            other => Err(Error::invalid(format!("unknown interaction format `{other}`"))),
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: format!("not UTF-8: {e}"),
    })
}

/// Non-blank lines with their 1-based numbers; `\r\n` endings are accepted.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(n, l)| (n + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

pub fn parse_interactions(path: &Path, format: InteractionFormat) -> Result<Vec<RawInteraction>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (line_no, line) in data_lines(&text) {
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        let expected = match format {
            InteractionFormat::MovielensTab => 3..=4,
            InteractionFormat::CheckinTsv => 2..=3,
        };
        if !expected.contains(&fields.len()) {
            return Err(err(format!(
                "expected {} tab-separated fields, found {}",
                match format {
                    InteractionFormat::MovielensTab => "3 or 4",
                    InteractionFormat::CheckinTsv => "2 or 3",
                },
                fields.len()
            )));
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(err("empty user or item id".into()));
        }
        let value = match fields.get(2) {
            Some(v) => v
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("bad rating value `{v}`")))?,
            None => 1.0,
        };
        out.push(RawInteraction {
            user_id: fields[0].to_string(),
            item_id: fields[1].to_string(),
            value,
            lat: None,
            lon: None,
        });
    }
    Ok(out)
}

/// Reads `item<TAB>lat<TAB>lon` lines.
pub fn parse_poi_file(path: &Path) -> Result<Vec<(String, f64, f64)>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (line_no, line) in data_lines(&text) {
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(err(format!("expected 3 fields, found {}", fields.len())));
        }
        let coord = |s: &str| s.trim().parse::<f64>().map_err(|e| err(format!("bad coordinate `{s}`: {e}")));
        let (lat, lon) = (coord(fields[1])?, coord(fields[2])?);
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(err(format!("coordinate ({lat}, {lon}) out of range")));
        }
        out.push((fields[0].to_string(), lat, lon));
    }
    Ok(out)
}

/// Copies POI coordinates onto the interactions. Interactions whose item has
/// no coordinates keep `None`.
pub fn attach_coordinates(interactions: &mut [RawInteraction], pois: &[(String, f64, f64)]) {
    let lookup: HashMap<&str, (f64, f64)> =
        pois.iter().map(|(id, lat, lon)| (id.as_str(), (*lat, *lon))).collect();
    for r in interactions {
        if let Some(&(lat, lon)) = lookup.get(r.item_id.as_str()) {
            r.lat = Some(lat);
            r.lon = Some(lon);
        }
    }
}

/// External ids of the dense user/item indices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IdMap {
    pub users: Vec<String>,
    pub items: Vec<String>,
}

impl IdMap {
    /// Keeps the ids selected by a [`Reindex`].
    pub fn select(&self, reindex: &Reindex) -> IdMap {
        IdMap {
            users: reindex.users.iter().map(|&u| self.users[u].clone()).collect(),
            items: reindex.items.iter().map(|&j| self.items[j].clone()).collect(),
        }
    }
}

/// Old indices of the rows/columns that survived a filter, in new order.
#[derive(Clone, Debug, PartialEq)]
pub struct Reindex {
    pub users: Vec<usize>,
    pub items: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Indexed {
    pub data: RatingsDataset,
    pub ids: IdMap,
    /// Repeated `(user, item)` lines dropped in favour of the last one.
    pub duplicates: usize,
}

/// Densely re-indexes ids in first-appearance order. Repeated `(user, item)`
/// pairs keep the last value.
pub fn index_interactions(raw: &[RawInteraction]) -> Result<Indexed> {
    let mut users: HashMap<&str, usize> = HashMap::new();
    let mut items: HashMap<&str, usize> = HashMap::new();
    let mut ids = IdMap::default();
    let mut cells: HashMap<(usize, usize), f64> = HashMap::new();
    let mut duplicates = 0;
    for r in raw {
        let u = *users.entry(&r.user_id).or_insert_with(|| {
            ids.users.push(r.user_id.clone());
            ids.users.len() - 1
        });
        let j = *items.entry(&r.item_id).or_insert_with(|| {
            ids.items.push(r.item_id.clone());
            ids.items.len() - 1
        });
        if cells.insert((u, j), r.value).is_some() {
            duplicates += 1;
        }
    }
    if duplicates > 0 {
        warn!("{duplicates} duplicate (user, item) interactions; kept the last occurrence");
    }
    let ratings = cells
        .into_iter()
        .map(|((u, j), v)| Rating::new(u, j, v))
        .collect();
    let data = RatingsDataset::new(ids.users.len(), ids.items.len(), ratings, FeedbackMode::RawStars)?;
    Ok(Indexed {
        data,
        ids,
        duplicates,
    })
}

/// Repeatedly drops users and items with `<= threshold` ratings until none
/// remain. Survivors are re-indexed densely, preserving relative order.
pub fn filter_min_ratings(data: &RatingsDataset, threshold: usize) -> Result<(RatingsDataset, Reindex)> {
    let mut user_alive = vec![true; data.num_users()];
    let mut item_alive = vec![true; data.num_items()];
    loop {
        let mut user_counts = vec![0usize; data.num_users()];
        let mut item_counts = vec![0usize; data.num_items()];
        for r in data.ratings() {
            if user_alive[r.user] && item_alive[r.item] {
                user_counts[r.user] += 1;
                item_counts[r.item] += 1;
            }
        }
        let mut changed = false;
        for (alive, &count) in user_alive.iter_mut().zip(&user_counts) {
            if *alive && count <= threshold {
                *alive = false;
                changed = true;
            }
        }
        for (alive, &count) in item_alive.iter_mut().zip(&item_counts) {
            if *alive && count <= threshold {
                *alive = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let keep = |alive: &[bool]| -> (Vec<usize>, Vec<Option<usize>>) {
        let old: Vec<usize> = (0..alive.len()).filter(|&k| alive[k]).collect();
        let mut new = vec![None; alive.len()];
        for (n, &o) in old.iter().enumerate() {
            new[o] = Some(n);
        }
        (old, new)
    };
    let (old_users, new_user) = keep(&user_alive);
    let (old_items, new_item) = keep(&item_alive);
    let ratings: Vec<Rating> = data
        .ratings()
        .filter_map(|r| Some(Rating::new(new_user[r.user]?, new_item[r.item]?, r.value)))
        .collect();
    if ratings.is_empty() {
        return Err(Error::EmptyAfterFiltering);
    }
    let filtered = RatingsDataset::new(old_users.len(), old_items.len(), ratings, data.feedback())?;
    Ok((
        filtered,
        Reindex {
            users: old_users,
            items: old_items,
        },
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PolarizeMode {
    /// Every observed rating becomes 1.
    Implicit01,
    /// Stars `>= 4` become +1, anything lower −1.
    ExplicitThreshold4,
}

impl FromStr for PolarizeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "implicit01" | "implicit" => Ok(PolarizeMode::Implicit01),
            "explicit-threshold4" | "explicit" => Ok(PolarizeMode::ExplicitThreshold4),
            other => Err(Error::invalid(format!("unknown feedback mode `{other}`"))),
        }
    }
}

impl fmt::Display for PolarizeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolarizeMode::Implicit01 => "implicit01",
            PolarizeMode::ExplicitThreshold4 => "explicit-threshold4",
        })
    }
}

pub const LIKE_THRESHOLD: f64 = 4.0;

pub fn polarize(data: &RatingsDataset, mode: PolarizeMode) -> RatingsDataset {
    match mode {
        PolarizeMode::Implicit01 => data.map_values(FeedbackMode::Implicit01, |_| 1.0),
        PolarizeMode::ExplicitThreshold4 => data.map_values(FeedbackMode::ExplicitPm1, |v| {
            if v >= LIKE_THRESHOLD {
                1.0
            } else {
                -1.0
            }
        }),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitSpec {
    pub seed: u64,
    /// Add sampled negatives to the training half (implicit data).
    pub negative_sampling: bool,
}

impl SplitSpec {
    /// Fraction of each user's ratings placed in the training half.
    pub const TRAIN_FRACTION: f64 = 0.5;
}

fn user_rng(seed: u64, user: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(user as u64);
    rng
}

/// Per user, a random `⌈|L_i|/2⌉` of the ratings go to train and the rest to
/// test. Each user draws from its own random stream.
pub fn split_train_test(data: &RatingsDataset, spec: &SplitSpec) -> Result<(RatingsDataset, RatingsDataset)> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for u in 0..data.num_users() {
        let mut ratings: Vec<(usize, f64)> = data.user_ratings(u).collect();
        if ratings.len() < 2 {
            return Err(Error::TooFewRatings {
                user: u,
                count: ratings.len(),
            });
        }
        ratings.shuffle(&mut user_rng(spec.seed, u));
        let n_train = ratings.len().div_ceil(2);
        for (k, (j, v)) in ratings.into_iter().enumerate() {
            let r = Rating::new(u, j, v);
            if k < n_train {
                train.push(r);
            } else {
                test.push(r);
            }
        }
    }
    let build = |ratings| RatingsDataset::new(data.num_users(), data.num_items(), ratings, data.feedback());
    Ok((build(train)?, build(test)?))
}

/// Draws `count` items uniformly without replacement from `pool`.
fn draw(pool: &[usize], count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let picked = rand::seq::index::sample(rng, pool.len(), count.min(pool.len()));
    let mut items: Vec<usize> = picked.into_iter().map(|k| pool[k]).collect();
    items.sort_unstable();
    items
}

fn unobserved(num_items: usize, observed: &[&RatingsDataset], user: usize) -> Vec<usize> {
    (0..num_items)
        .filter(|&j| observed.iter().all(|d| !d.contains(user, j)))
        .collect()
}

/// For each user with `n` training positives, adds `n` training negatives
/// (value −1) drawn from the items the user has in neither half. A short
/// pool is used in full with a warning.
pub fn sample_negatives(train: &RatingsDataset, test: &RatingsDataset, seed: u64) -> RatingsDataset {
    let mut ratings: Vec<Rating> = train.ratings().collect();
    let mut short = 0;
    for u in 0..train.num_users() {
        let wanted = train.positives(u).count();
        let pool = unobserved(train.num_items(), &[train, test], u);
        if pool.len() < wanted {
            short += 1;
        }
        let mut rng = user_rng(seed ^ NEGATIVE_STREAM_SALT, u);
        ratings.extend(draw(&pool, wanted, &mut rng).into_iter().map(|j| Rating::new(u, j, -1.0)));
    }
    if short > 0 {
        warn!("{short} user(s) had fewer unobserved items than training positives; sampled all available");
    }
    RatingsDataset::new(train.num_users(), train.num_items(), ratings, FeedbackMode::Implicit01)
        .expect("sampled negatives are disjoint from observed items")
}

/// Adds to each test user as many negatives as it has test positives, drawn
/// from items absent from both halves (sampled training negatives included),
/// so that ranking metrics have non-relevant candidates.
pub fn sample_test_negatives(train: &RatingsDataset, test: &RatingsDataset, seed: u64) -> RatingsDataset {
    let mut ratings: Vec<Rating> = test.ratings().collect();
    let mut short = 0;
    for u in 0..test.num_users() {
        let wanted = test.positives(u).count();
        let pool = unobserved(test.num_items(), &[train, test], u);
        if pool.len() < wanted {
            short += 1;
        }
        let mut rng = user_rng(seed ^ TEST_NEGATIVE_STREAM_SALT, u);
        ratings.extend(draw(&pool, wanted, &mut rng).into_iter().map(|j| Rating::new(u, j, -1.0)));
    }
    if short > 0 {
        warn!("{short} user(s) had too few unobserved items for test negatives");
    }
    RatingsDataset::new(test.num_users(), test.num_items(), ratings, FeedbackMode::Implicit01)
        .expect("sampled negatives are disjoint from observed items")
}

/// Writes `user<TAB>item<TAB>value` with dense indices.
pub fn write_ratings_tsv(path: &Path, data: &RatingsDataset) -> Result<()> {
    let mut out = Vec::with_capacity(data.len() * 12);
    for r in data.ratings() {
        writeln!(out, "{}\t{}\t{:?}", r.user, r.item, r.value).unwrap();
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a file written by [`write_ratings_tsv`].
pub fn read_ratings_tsv(
    path: &Path,
    num_users: usize,
    num_items: usize,
    feedback: FeedbackMode,
) -> Result<RatingsDataset> {
    let text = read_text(path)?;
    let mut ratings = Vec::new();
    for (line_no, line) in data_lines(&text) {
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let mut fields = line.split('\t');
        let mut next = |what: &str| fields.next().ok_or_else(|| err(format!("missing {what}")));
        let u = next("user")?.parse::<usize>().map_err(|e| err(e.to_string()))?;
        let j = next("item")?.parse::<usize>().map_err(|e| err(e.to_string()))?;
        let v = next("value")?.parse::<f64>().map_err(|e| err(e.to_string()))?;
        ratings.push(Rating::new(u, j, v));
    }
    RatingsDataset::new(num_users, num_items, ratings, feedback)
}

/// One id per line.
pub fn write_ids(path: &Path, ids: &[String]) -> Result<()> {
    let mut text = ids.join("\n");
    if !ids.is_empty() {
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_ids(path: &Path) -> Result<Vec<String>> {
    Ok(read_text(path)?
        .lines()
        .map(|l| l.trim_end_matches('\r').to_string())
        .filter(|l| !l.is_empty())
        .collect())
}
