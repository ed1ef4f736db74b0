//! prepare / train / sweep / baseline / eval.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use capmf::checkpoint;
use capmf::context::{make_capacities, make_propensities, read_vector_csv, write_vector_csv};
use capmf::eval::{evaluate, post_process_baseline, ranking_metrics, recommended_counts};
use capmf::geo::{build_influence_matrix, latlon_to_tile, write_influence_csv, DEFAULT_LEVEL};
use capmf::ingest::{
    filter_min_ratings, index_interactions, parse_interactions, parse_poi_file, polarize, read_ids,
    read_ratings_tsv, sample_negatives, sample_test_negatives, split_train_test, write_ids, write_ratings_tsv,
    PolarizeMode, SplitSpec,
};
use capmf::train::StopReason;
use capmf::{
    ContextVectors, FeedbackMode, InfluenceMatrix, LatentModel, MetricsReport, RatingsDataset, TileCoord, TrainTrace,
};
use log::{info, warn};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Family, Variant};
use crate::report::{self, Row};

/// Writes through a temporary sibling and renames, so readers never see a
/// half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}

/// Runs `f` on a dedicated pool. Reference mode pins one thread.
pub fn with_threads<T: Send>(threads: Option<usize>, reference: bool, f: impl FnOnce() -> T + Send) -> Result<T> {
    let n = if reference { 1 } else { threads.unwrap_or(0) };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build()?;
    Ok(pool.install(f))
}

const STAMP: &str = "prepared.txt";

fn seed_dir(cfg: &ExperimentConfig, seed: u64) -> PathBuf {
    cfg.prepared_dir().join(format!("seed-{seed}"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrepareSummary {
    pub users: usize,
    pub items: usize,
    pub ratings: usize,
    /// Train and test sizes per seed, sampled negatives included.
    pub split_sizes: Vec<(u64, usize, usize)>,
    pub tiles: Option<usize>,
}

fn feedback_of(mode: PolarizeMode) -> FeedbackMode {
    match mode {
        PolarizeMode::Implicit01 => FeedbackMode::Implicit01,
        PolarizeMode::ExplicitThreshold4 => FeedbackMode::ExplicitPm1,
    }
}

fn override_vector(path: &Option<PathBuf>, len: usize, what: &str) -> Result<Option<Vec<f64>>> {
    let Some(p) = path else { return Ok(None) };
    let v = read_vector_csv(p)?;
    if v.len() != len {
        bail!("{what} file {} has {} entries, expected {len}", p.display(), v.len());
    }
    Ok(Some(v))
}

/// Filters, polarizes and splits the raw data and writes everything the
/// later stages read, one directory per seed.
pub fn prepare(cfg: &ExperimentConfig) -> Result<PrepareSummary> {
    let raw = parse_interactions(&cfg.dataset, cfg.format)?;
    let pois = match &cfg.poi_file {
        Some(p) => Some(parse_poi_file(p)?),
        None => None,
    };
    let indexed = index_interactions(&raw)?;
    let (data, reindex) = filter_min_ratings(&indexed.data, cfg.threshold)?;
    let ids = indexed.ids.select(&reindex);
    info!(
        "{}: {} users, {} items, {} ratings after filtering at {}",
        cfg.name,
        data.num_users(),
        data.num_items(),
        data.len(),
        cfg.threshold
    );
    let data = polarize(&data, cfg.feedback);

    let dir = cfg.prepared_dir();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    write_ids(&dir.join("users.txt"), &ids.users)?;
    write_ids(&dir.join("items.txt"), &ids.items)?;

    let mut tiles_written = None;
    if let (Some(pois), Some(poi_path)) = (pois, &cfg.poi_file) {
        let coords: HashMap<&str, (f64, f64)> = pois.iter().map(|(id, lat, lon)| (id.as_str(), (*lat, *lon))).collect();
        let mut tiles = Vec::with_capacity(ids.items.len());
        let mut csv = String::from("item,tile_x,tile_y\n");
        for (j, id) in ids.items.iter().enumerate() {
            let &(lat, lon) = coords
                .get(id.as_str())
                .ok_or_else(|| anyhow!("item `{id}` has no coordinates in {}", poi_path.display()))?;
            let t = latlon_to_tile(lat, lon, DEFAULT_LEVEL)?;
            writeln!(csv, "{j},{},{}", t.x, t.y).unwrap();
            tiles.push(t);
        }
        write_atomic(&dir.join("tiles.csv"), csv.as_bytes())?;
        let y = build_influence_matrix(&tiles, cfg.bandwidth)?;
        write_influence_csv(&dir.join("influence.csv"), &y)?;
        tiles_written = Some(y.num_tiles());
    }

    let mut split_sizes = Vec::new();
    for &seed in &cfg.seeds {
        let (train, test) = split_train_test(
            &data,
            &SplitSpec {
                seed,
                negative_sampling: cfg.negative_sampling,
            },
        )?;
        let propensities = match override_vector(&cfg.propensity_file, data.num_users(), "propensity")? {
            Some(p) => p,
            None => make_propensities(&train, cfg.propensity)?,
        };
        let capacities = match override_vector(&cfg.capacity_file, data.num_items(), "capacity")? {
            Some(c) => c,
            None => make_capacities(&train, cfg.capacity)?,
        };
        ContextVectors::new(propensities.clone(), capacities.clone())?;
        let (train, test) = if cfg.negative_sampling {
            let with_neg = sample_negatives(&train, &test, seed);
            let test = sample_test_negatives(&with_neg, &test, seed);
            (with_neg, test)
        } else {
            (train, test)
        };
        let sd = seed_dir(cfg, seed);
        fs::create_dir_all(&sd).with_context(|| format!("creating {}", sd.display()))?;
        write_ratings_tsv(&sd.join("train.tsv"), &train)?;
        write_ratings_tsv(&sd.join("test.tsv"), &test)?;
        write_vector_csv(&sd.join("propensities.csv"), &propensities)?;
        write_vector_csv(&sd.join("capacities.csv"), &capacities)?;
        split_sizes.push((seed, train.len(), test.len()));
    }

    let stamp = format!(
        "data_hash={}\nusers={}\nitems={}\nratings={}\nfeedback={}\n",
        cfg.data_hash_hex(),
        data.num_users(),
        data.num_items(),
        data.len(),
        feedback_of(cfg.feedback)
    );
    write_atomic(&dir.join(STAMP), stamp.as_bytes())?;
    Ok(PrepareSummary {
        users: data.num_users(),
        items: data.num_items(),
        ratings: data.len(),
        split_sizes,
        tiles: tiles_written,
    })
}

/// Shape of the prepared data, read back from disk.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub users: Vec<String>,
    pub items: Vec<String>,
    pub feedback: FeedbackMode,
    pub influence: Option<Arc<InfluenceMatrix>>,
}

pub fn load_prepared(cfg: &ExperimentConfig) -> Result<Prepared> {
    let dir = cfg.prepared_dir();
    let stamp_path = dir.join(STAMP);
    let stamp = fs::read_to_string(&stamp_path)
        .with_context(|| format!("no prepared data at {} (run `capmf prepare` first)", dir.display()))?;
    let fields: BTreeMap<&str, &str> = stamp.lines().filter_map(|l| l.split_once('=')).collect();
    if fields.get("data_hash") != Some(&cfg.data_hash_hex().as_str()) {
        bail!(
            "prepared data in {} was built from a different configuration; rerun `capmf prepare`",
            dir.display()
        );
    }
    let users = read_ids(&dir.join("users.txt"))?;
    let items = read_ids(&dir.join("items.txt"))?;
    let influence = if cfg.needs_geo() {
        let path = dir.join("tiles.csv");
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let mut tiles = Vec::with_capacity(items.len());
        for (n, line) in text.lines().skip(1).enumerate() {
            let f: Vec<&str> = line.split(',').collect();
            let parse = |s: &str| s.parse::<u32>().with_context(|| format!("{}:{}: bad tile", path.display(), n + 2));
            if f.len() != 3 {
                bail!("{}:{}: expected item,tile_x,tile_y", path.display(), n + 2);
            }
            tiles.push(TileCoord {
                x: parse(f[1])?,
                y: parse(f[2])?,
                level: DEFAULT_LEVEL,
            });
        }
        Some(Arc::new(build_influence_matrix(&tiles, cfg.bandwidth)?))
    } else {
        None
    };
    Ok(Prepared {
        users,
        items,
        feedback: feedback_of(cfg.feedback),
        influence,
    })
}

#[derive(Clone, Debug)]
pub struct SeedData {
    pub seed: u64,
    pub train: RatingsDataset,
    pub test: RatingsDataset,
    pub ctx: ContextVectors,
}

pub fn load_seed(cfg: &ExperimentConfig, prepared: &Prepared, seed: u64) -> Result<SeedData> {
    let dir = seed_dir(cfg, seed);
    let (m, n) = (prepared.users.len(), prepared.items.len());
    Ok(SeedData {
        seed,
        train: read_ratings_tsv(&dir.join("train.tsv"), m, n, prepared.feedback)?,
        test: read_ratings_tsv(&dir.join("test.tsv"), m, n, prepared.feedback)?,
        ctx: ContextVectors::new(
            read_vector_csv(&dir.join("propensities.csv"))?,
            read_vector_csv(&dir.join("capacities.csv"))?,
        )?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub family: Family,
    pub variant: Variant,
    pub alpha: f64,
    pub seed: u64,
}

impl Cell {
    pub fn label(&self) -> String {
        format!("{}-{}-a{}-s{}", self.family, self.variant, self.alpha, self.seed)
    }
}

/// All cells in output order: model, variant, alpha, seed.
pub fn cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for &family in &cfg.models {
        for &variant in &cfg.variants {
            for alpha in variant.alphas(&cfg.alphas) {
                for &seed in &cfg.seeds {
                    out.push(Cell {
                        family,
                        variant,
                        alpha,
                        seed,
                    });
                }
            }
        }
    }
    out
}

pub fn checkpoint_path(cfg: &ExperimentConfig, cell: &Cell) -> PathBuf {
    cfg.output.join("models").join(format!("{}.ckpt", cell.label()))
}

pub fn trace_path(cfg: &ExperimentConfig, cell: &Cell) -> PathBuf {
    cfg.output.join("traces").join(format!("{}.csv", cell.label()))
}

#[derive(Clone, Debug)]
pub struct CellResult {
    pub report: MetricsReport,
    /// Iterations and stop reason, when the cell trained a model.
    pub training: Option<(usize, StopReason)>,
}

fn fit(
    cfg: &ExperimentConfig,
    prepared: &Prepared,
    data: &SeedData,
    cell: &Cell,
) -> Result<(LatentModel, TrainTrace)> {
    let tc = cfg.train_config(cell.alpha, cell.family, cell.seed);
    let influence = if cell.family.geo() {
        Some(prepared.influence.clone().ok_or_else(|| anyhow!("geo model without prepared tiles"))?)
    } else {
        None
    };
    let out = match cell.variant {
        Variant::Unconstrained | Variant::PostProcess => capmf::train_unconstrained(&data.train, &tc, influence)?,
        Variant::Constrained | Variant::OnlyCap => capmf::train(&data.train, &data.ctx, &tc, influence)?,
    };
    Ok(out)
}

/// Post-processed rankings of an unconstrained model, over each user's test
/// items.
fn baseline_metrics(model: &LatentModel, data: &SeedData, tops: &[usize], report: &mut MetricsReport) -> Result<()> {
    let k = tops.iter().copied().max().unwrap_or(0);
    let ranked = post_process_baseline(&model.score_matrix(), &data.ctx, k, Some(&data.test));
    let (map, wap, wmcv) = ranking_metrics(&ranked, &data.test, &data.ctx, tops)?;
    report.map_at = map;
    report.wap_at = wap;
    report.wmcv_at = wmcv;
    Ok(())
}

/// Trains and evaluates one cell. With `artifacts`, the checkpoint and
/// trace are written too.
pub fn run_cell(
    cfg: &ExperimentConfig,
    prepared: &Prepared,
    data: &SeedData,
    cell: &Cell,
    artifacts: bool,
) -> Result<CellResult> {
    let (model, trace) = fit(cfg, prepared, data, cell)?;
    let mut report = evaluate(
        &model,
        &data.test,
        &data.ctx,
        cell.family.accuracy(),
        cfg.surrogate,
        cell.alpha,
        &cfg.tops,
    )?;
    if cell.variant == Variant::PostProcess {
        baseline_metrics(&model, data, &cfg.tops, &mut report)?;
    }
    if artifacts {
        write_atomic(&trace_path(cfg, cell), trace.to_csv().as_bytes())?;
        write_atomic(&checkpoint_path(cfg, cell), &checkpoint::encode(&model, &cfg.hash()))?;
    }
    Ok(CellResult {
        report,
        training: Some((trace.iterations, trace.stop_reason)),
    })
}

fn seeds_data(cfg: &ExperimentConfig, prepared: &Prepared) -> Result<BTreeMap<u64, SeedData>> {
    cfg.seeds
        .iter()
        .map(|&s| Ok((s, load_seed(cfg, prepared, s)?)))
        .collect()
}

#[derive(Clone, Debug)]
pub struct SweepOutput {
    pub metrics: PathBuf,
    pub summary: PathBuf,
    pub rows: Vec<Row>,
}

/// Trains every cell and writes `metrics.csv` and `summary.csv`. A cell
/// that fails is recorded as such and the sweep carries on.
pub fn sweep(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    let prepared = load_prepared(cfg)?;
    let data = seeds_data(cfg, &prepared)?;
    let cells = cells(cfg);
    info!("sweeping {} cells", cells.len());
    let rows: Vec<Row> = cells
        .par_iter()
        .map(|cell| {
            let outcome = run_cell(cfg, &prepared, &data[&cell.seed], cell, true);
            if let Err(e) = &outcome {
                warn!("cell {} failed: {e:#}", cell.label());
            }
            Row::new(cfg, cell, outcome.map_err(|e| format!("{e:#}")))
        })
        .collect();
    let metrics = cfg.output.join("metrics.csv");
    let summary = cfg.output.join("summary.csv");
    write_atomic(&metrics, report::metrics_csv(&cfg.tops, &rows).as_bytes())?;
    write_atomic(&summary, report::summary_csv(&cfg.tops, &rows).as_bytes())?;
    Ok(SweepOutput { metrics, summary, rows })
}

/// Trains the first configured model and variant at one alpha and seed.
pub fn train_one(cfg: &ExperimentConfig, alpha: Option<f64>, seed: Option<u64>) -> Result<(Cell, Row)> {
    let prepared = load_prepared(cfg)?;
    let variant = cfg.variants[0];
    let alpha = match (variant, alpha) {
        (Variant::Constrained, Some(a)) => a,
        (Variant::Constrained, None) => cfg.alphas[0],
        (v, _) => v.alphas(&cfg.alphas)[0],
    };
    let seed = seed.unwrap_or(cfg.seeds[0]);
    if !cfg.seeds.contains(&seed) {
        bail!("seed {seed} was not prepared (configured seeds: {:?})", cfg.seeds);
    }
    let cell = Cell {
        family: cfg.models[0],
        variant,
        alpha,
        seed,
    };
    let data = load_seed(cfg, &prepared, seed)?;
    let result = run_cell(cfg, &prepared, &data, &cell, true)?;
    Ok((cell, Row::new(cfg, &cell, Ok(result))))
}

#[derive(Clone, Debug)]
pub struct BaselineOutput {
    pub metrics: PathBuf,
    pub audit: PathBuf,
    pub rows: Vec<Row>,
}

/// Applies the post-processing baseline to saved unconstrained models.
///
/// Without `checkpoint`, every configured model and seed is read from
/// `models/<model>-unconstrained-a0-s<seed>.ckpt`.
pub fn baseline(cfg: &ExperimentConfig, checkpoint: Option<&Path>, seed: Option<u64>) -> Result<BaselineOutput> {
    let prepared = load_prepared(cfg)?;
    let post = |family, seed| Cell {
        family,
        variant: Variant::PostProcess,
        alpha: 0.0,
        seed,
    };
    let jobs: Vec<(Cell, PathBuf)> = match checkpoint {
        Some(p) => vec![(post(cfg.models[0], seed.unwrap_or(cfg.seeds[0])), p.to_path_buf())],
        None => cfg
            .models
            .iter()
            .flat_map(|&f| cfg.seeds.iter().map(move |&s| (f, s)))
            .filter(|&(_, s)| seed.is_none_or(|want| want == s))
            .map(|(f, s)| {
                let cell = post(f, s);
                let unconstrained = Cell {
                    variant: Variant::Unconstrained,
                    ..cell
                };
                (cell, checkpoint_path(cfg, &unconstrained))
            })
            .collect(),
    };

    let mut rows = Vec::new();
    let mut audit = String::from("model,seed,top,item,capacity,allowed,recommended\n");
    let k_max = cfg.tops.iter().copied().max().unwrap_or(0);
    for (cell, path) in jobs {
        if !path.exists() {
            bail!("missing checkpoint {} (train the unconstrained model first)", path.display());
        }
        let (model, hash) = checkpoint::load(&path)?;
        if hash != cfg.hash() {
            warn!("{} was written under a different configuration", path.display());
        }
        let data = load_seed(cfg, &prepared, cell.seed)?;
        let mut report = evaluate(
            &model,
            &data.test,
            &data.ctx,
            cell.family.accuracy(),
            cfg.surrogate,
            0.0,
            &cfg.tops,
        )?;
        baseline_metrics(&model, &data, &cfg.tops, &mut report)?;
        let ranked = post_process_baseline(&model.score_matrix(), &data.ctx, k_max, Some(&data.test));
        for &k in &cfg.tops {
            let counts = recommended_counts(&ranked, model.num_items(), k);
            for (j, &count) in counts.iter().enumerate() {
                let c = data.ctx.capacities()[j];
                writeln!(audit, "{},{},{k},{j},{c},{},{count}", cell.family, cell.seed, c.floor()).unwrap();
            }
        }
        rows.push(Row::new(
            cfg,
            &cell,
            Ok(CellResult { report, training: None }),
        ));
    }
    let metrics = cfg.output.join("baseline.csv");
    let audit_path = cfg.output.join("baseline_audit.csv");
    write_atomic(&metrics, report::metrics_csv(&cfg.tops, &rows).as_bytes())?;
    write_atomic(&audit_path, audit.as_bytes())?;
    Ok(BaselineOutput {
        metrics,
        audit: audit_path,
        rows,
    })
}

/// Evaluates a saved model on a prepared test split.
pub fn eval_checkpoint(
    cfg: &ExperimentConfig,
    path: &Path,
    family: Option<Family>,
    alpha: f64,
    seed: Option<u64>,
) -> Result<Row> {
    let prepared = load_prepared(cfg)?;
    let (model, _) = checkpoint::load(path)?;
    let family = family.unwrap_or(cfg.models[0]);
    if model.is_geo() != family.geo() {
        bail!("checkpoint {} does not match model family {family}", path.display());
    }
    let seed = seed.unwrap_or(cfg.seeds[0]);
    let data = load_seed(cfg, &prepared, seed)?;
    if model.num_users() != data.test.num_users() || model.num_items() != data.test.num_items() {
        bail!(
            "checkpoint {} is {}x{}, prepared data is {}x{}",
            path.display(),
            model.num_users(),
            model.num_items(),
            data.test.num_users(),
            data.test.num_items()
        );
    }
    let report = evaluate(&model, &data.test, &data.ctx, family.accuracy(), cfg.surrogate, alpha, &cfg.tops)?;
    let variant = if alpha == 0.0 {
        Variant::Unconstrained
    } else if alpha == 1.0 {
        Variant::OnlyCap
    } else {
        Variant::Constrained
    };
    let cell = Cell {
        family,
        variant,
        alpha,
        seed,
    };
    Ok(Row::new(
        cfg,
        &cell,
        Ok(CellResult { report, training: None }),
    ))
}
