//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use capmf::ingest::{InteractionFormat, PolarizeMode};
use capmf::{AccuracyKind, CapacityKind, PropensityKind, SurrogateKind, TrainConfig};
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Pmf,
    Bpr,
    GeoMf,
    GeoBpr,
}

impl Family {
    pub fn accuracy(self) -> AccuracyKind {
        match self {
            Family::Pmf | Family::GeoMf => AccuracyKind::Square,
            Family::Bpr | Family::GeoBpr => AccuracyKind::Bpr,
        }
    }

    pub fn geo(self) -> bool {
        matches!(self, Family::GeoMf | Family::GeoBpr)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Pmf => "pmf",
            Family::Bpr => "bpr",
            Family::GeoMf => "geomf",
            Family::GeoBpr => "geobpr",
        })
    }
}

impl FromStr for Family {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "pmf" => Family::Pmf,
            "bpr" => Family::Bpr,
            "geomf" => Family::GeoMf,
            "geobpr" => Family::GeoBpr,
            other => bail!("unknown model family `{other}` (pmf, bpr, geomf, geobpr)"),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Constrained,
    Unconstrained,
    OnlyCap,
    PostProcess,
}

impl Variant {
    /// The alphas a variant runs at; constrained uses the configured list.
    pub fn alphas(self, configured: &[f64]) -> Vec<f64> {
        match self {
            Variant::Constrained => configured.to_vec(),
            Variant::Unconstrained | Variant::PostProcess => vec![0.0],
            Variant::OnlyCap => vec![1.0],
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Constrained => "constrained",
            Variant::Unconstrained => "unconstrained",
            Variant::OnlyCap => "onlycap",
            Variant::PostProcess => "postprocess",
        })
    }
}

impl FromStr for Variant {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "constrained" => Variant::Constrained,
            "unconstrained" => Variant::Unconstrained,
            "onlycap" => Variant::OnlyCap,
            "postprocess" => Variant::PostProcess,
            other => bail!("unknown variant `{other}` (constrained, unconstrained, onlycap, postprocess)"),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub dataset: PathBuf,
    pub format: InteractionFormat,
    pub poi_file: Option<PathBuf>,
    pub feedback: PolarizeMode,
    pub threshold: usize,
    pub capacity: CapacityKind,
    pub propensity: PropensityKind,
    pub capacity_file: Option<PathBuf>,
    pub propensity_file: Option<PathBuf>,
    pub negative_sampling: bool,
    pub models: Vec<Family>,
    pub variants: Vec<Variant>,
    pub alphas: Vec<f64>,
    pub surrogate: SurrogateKind,
    pub seeds: Vec<u64>,
    pub tops: Vec<usize>,
    pub rank: usize,
    pub lambda: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub init_scale: f64,
    /// Share of BPR pairs kept in the objective.
    pub bpr_pair_fraction: f64,
    pub bandwidth: f64,
    pub output: PathBuf,
}

/// Every accepted key, in canonical order.
pub const KEYS: &[&str] = &[
    "alphas",
    "bandwidth",
    "bpr_pair_fraction",
    "capacity",
    "capacity_file",
    "dataset",
    "feedback",
    "format",
    "init_scale",
    "lambda",
    "max_iters",
    "models",
    "name",
    "negative_sampling",
    "output",
    "poi_file",
    "propensity",
    "propensity_file",
    "rank",
    "repetitions",
    "seeds",
    "surrogate",
    "threshold",
    "tol",
    "tops",
    "variants",
];

/// Keys that decide the prepared artifacts.
const DATA_KEYS: &[&str] = &[
    "bandwidth",
    "capacity",
    "capacity_file",
    "dataset",
    "feedback",
    "format",
    "negative_sampling",
    "poi_file",
    "propensity",
    "propensity_file",
    "seeds",
    "threshold",
];

/// Parses `key = value` lines. `#` starts a comment line.
pub fn parse_pairs(text: &str, origin: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r').trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("{}:{}: expected key = value", origin.display(), n + 1))?;
        let k = k.trim().replace('-', "_");
        if !KEYS.contains(&k.as_str()) {
            bail!("{}:{}: unknown key `{k}`", origin.display(), n + 1);
        }
        if out.insert(k.clone(), v.trim().to_string()).is_some() {
            bail!("{}:{}: duplicate key `{k}`", origin.display(), n + 1);
        }
    }
    Ok(out)
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| anyhow!("{key}: bad entry `{s}`: {e}")))
        .collect()
}

fn one<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    v.parse::<T>().map_err(|e| anyhow!("{key}: bad value `{v}`: {e}"))
}

fn join<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn path_str(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl ExperimentConfig {
    /// Builds a config from key/value pairs, filling in defaults.
    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| pairs.get(k).map(String::as_str).filter(|v| !v.is_empty());
        let defaults = TrainConfig::default();

        let dataset = PathBuf::from(get("dataset").ok_or_else(|| anyhow!("`dataset` is required"))?);
        let name = match get("name") {
            Some(n) => n.to_string(),
            None => dataset
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into()),
        };
        let feedback: PolarizeMode = get("feedback").map_or(Ok(PolarizeMode::Implicit01), |v| one("feedback", v))?;
        let seeds: Vec<u64> = match (get("seeds"), get("repetitions")) {
            (Some(s), reps) => {
                let seeds = list("seeds", s)?;
                if let Some(r) = reps {
                    if one::<usize>("repetitions", r)? != seeds.len() {
                        bail!("repetitions = {r} but {} seeds listed", seeds.len());
                    }
                }
                seeds
            }
            (None, reps) => {
                let r: usize = reps.map_or(Ok(5), |r| one("repetitions", r))?;
                (0..r as u64).collect()
            }
        };

        let cfg = ExperimentConfig {
            name,
            format: get("format").map_or(Ok(InteractionFormat::MovielensTab), |v| one("format", v))?,
            poi_file: get("poi_file").map(PathBuf::from),
            feedback,
            threshold: get("threshold").map_or(Ok(10), |v| one("threshold", v))?,
            capacity: get("capacity").map_or(Ok(CapacityKind::Actual), |v| one("capacity", v))?,
            propensity: get("propensity").map_or(Ok(PropensityKind::Actual), |v| one("propensity", v))?,
            capacity_file: get("capacity_file").map(PathBuf::from),
            propensity_file: get("propensity_file").map(PathBuf::from),
            negative_sampling: get("negative_sampling")
                .map_or(Ok(feedback == PolarizeMode::Implicit01), |v| one("negative_sampling", v))?,
            models: get("models").map_or(Ok(vec![Family::Pmf]), |v| list("models", v))?,
            variants: get("variants").map_or(Ok(vec![Variant::Constrained]), |v| list("variants", v))?,
            alphas: get("alphas").map_or(Ok(vec![defaults.alpha]), |v| list("alphas", v))?,
            surrogate: get("surrogate").map_or(Ok(defaults.surrogate), |v| one("surrogate", v))?,
            seeds,
            tops: get("tops").map_or(Ok(vec![1, 5, 10]), |v| list("tops", v))?,
            rank: get("rank").map_or(Ok(defaults.rank), |v| one("rank", v))?,
            lambda: get("lambda").map_or(Ok(defaults.lambda), |v| one("lambda", v))?,
            tol: get("tol").map_or(Ok(defaults.tol), |v| one("tol", v))?,
            max_iters: get("max_iters").map_or(Ok(defaults.max_iters), |v| one("max_iters", v))?,
            init_scale: get("init_scale").map_or(Ok(defaults.init_scale), |v| one("init_scale", v))?,
            bpr_pair_fraction: get("bpr_pair_fraction")
                .map_or(Ok(defaults.bpr_pair_fraction), |v| one("bpr_pair_fraction", v))?,
            bandwidth: get("bandwidth").map_or(Ok(1.0), |v| one("bandwidth", v))?,
            output: PathBuf::from(get("output").unwrap_or("out")),
            dataset,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &BTreeMap<String, String>) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut pairs = parse_pairs(&text, path)?;
        pairs.extend(overrides.clone());
        Self::from_pairs(&pairs)
    }

    fn validate(&self) -> Result<()> {
        if self.models.is_empty() || self.variants.is_empty() || self.alphas.is_empty() {
            bail!("models, variants and alphas must be non-empty");
        }
        if self.seeds.is_empty() {
            bail!("at least one seed / repetition is required");
        }
        if let Some(a) = self.alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            bail!("alpha {a} outside [0, 1]");
        }
        if self.tops.contains(&0) {
            bail!("tops must be >= 1");
        }
        if self.needs_geo() && self.format != InteractionFormat::CheckinTsv {
            bail!("geo models need checkin-tsv data");
        }
        if self.needs_geo() && self.poi_file.is_none() {
            bail!("geo models need `poi_file`");
        }
        if self.negative_sampling && self.feedback != PolarizeMode::Implicit01 {
            bail!("negative sampling only applies to implicit feedback");
        }
        if !(self.bandwidth > 0.0) {
            bail!("bandwidth must be > 0");
        }
        self.train_config(0.0, Family::Pmf, 0).validate()?;
        Ok(())
    }

    pub fn needs_geo(&self) -> bool {
        self.models.iter().any(|m| m.geo())
    }

    pub fn train_config(&self, alpha: f64, family: Family, seed: u64) -> TrainConfig {
        TrainConfig {
            alpha,
            lambda: self.lambda,
            rank: self.rank,
            surrogate: self.surrogate,
            accuracy: family.accuracy(),
            geo: family.geo(),
            max_iters: self.max_iters,
            tol: self.tol,
            seed,
            init_scale: self.init_scale,
            bpr_pair_fraction: self.bpr_pair_fraction,
            ..TrainConfig::default()
        }
    }

    /// Every key with its normalized value, defaults included.
    pub fn canonical_pairs(&self) -> BTreeMap<&'static str, String> {
        let mut m = BTreeMap::new();
        m.insert("alphas", join(&self.alphas));
        m.insert("bandwidth", self.bandwidth.to_string());
        m.insert("bpr_pair_fraction", self.bpr_pair_fraction.to_string());
        m.insert("capacity", self.capacity.to_string());
        m.insert("capacity_file", path_str(&self.capacity_file));
        m.insert("dataset", self.dataset.display().to_string());
        m.insert("feedback", self.feedback.to_string());
        m.insert("format", self.format.to_string());
        m.insert("init_scale", self.init_scale.to_string());
        m.insert("lambda", self.lambda.to_string());
        m.insert("max_iters", self.max_iters.to_string());
        m.insert("models", join(&self.models));
        m.insert("name", self.name.clone());
        m.insert("negative_sampling", self.negative_sampling.to_string());
        m.insert("output", self.output.display().to_string());
        m.insert("poi_file", path_str(&self.poi_file));
        m.insert("propensity", self.propensity.to_string());
        m.insert("propensity_file", path_str(&self.propensity_file));
        m.insert("rank", self.rank.to_string());
        m.insert("repetitions", self.seeds.len().to_string());
        m.insert("seeds", join(&self.seeds));
        m.insert("surrogate", self.surrogate.to_string());
        m.insert("threshold", self.threshold.to_string());
        m.insert("tol", self.tol.to_string());
        m.insert("tops", join(&self.tops));
        m.insert("variants", join(&self.variants));
        m
    }

    /// Canonical text: sorted `key=value` lines. The output directory is
    /// left out so that the same experiment hashes the same wherever it is
    /// written.
    pub fn canonical_text(&self) -> String {
        render(self.canonical_pairs().into_iter().filter(|(k, _)| *k != "output"))
    }

    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(self.canonical_text().as_bytes()).into()
    }

    pub fn hash_hex(&self) -> String {
        hex::encode(self.hash())
    }

    /// Hash of the keys that shape the prepared artifacts.
    pub fn data_hash_hex(&self) -> String {
        let text = render(self.canonical_pairs().into_iter().filter(|(k, _)| DATA_KEYS.contains(k)));
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn prepared_dir(&self) -> PathBuf {
        self.output.join("prepared")
    }
}

fn render<'a>(pairs: impl Iterator<Item = (&'a str, String)>) -> String {
    pairs.map(|(k, v)| format!("{k}={v}\n")).collect()
}
