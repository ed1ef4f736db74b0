use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Result};
use capmf_cli::config::{ExperimentConfig, Family};
use capmf_cli::pipeline;
use capmf_cli::report;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "capmf", version, about = "Capacity-constrained latent-factor recommendation")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Single-threaded run; output is byte-identical across machines and runs.
    #[arg(long, global = true)]
    reference_mode: bool,
    #[command(subcommand)]
    command: Command,
}

/// Any config key can be given as a flag and overrides the file.
#[derive(Args, Clone, Debug, Default)]
struct ConfigArgs {
    /// key = value config file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    dataset: Option<String>,
    /// movielens-tab | checkin-tsv
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    poi_file: Option<String>,
    /// implicit01 | explicit-threshold4
    #[arg(long)]
    feedback: Option<String>,
    #[arg(long)]
    threshold: Option<String>,
    /// actual | binning | uniform-<c> | linear-max | linear-mean | reverse-binning
    #[arg(long)]
    capacity: Option<String>,
    /// actual | median | linear
    #[arg(long)]
    propensity: Option<String>,
    #[arg(long)]
    capacity_file: Option<String>,
    #[arg(long)]
    propensity_file: Option<String>,
    #[arg(long)]
    negative_sampling: Option<String>,
    /// Comma-separated: pmf, bpr, geomf, geobpr
    #[arg(long)]
    models: Option<String>,
    /// Comma-separated: constrained, unconstrained, onlycap, postprocess
    #[arg(long)]
    variants: Option<String>,
    #[arg(long)]
    alphas: Option<String>,
    /// logistic | exponential | hinge
    #[arg(long)]
    surrogate: Option<String>,
    #[arg(long)]
    repetitions: Option<String>,
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    tops: Option<String>,
    #[arg(long)]
    rank: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    tol: Option<String>,
    #[arg(long)]
    max_iters: Option<String>,
    #[arg(long)]
    init_scale: Option<String>,
    /// Share of BPR pairs kept in the objective, in (0, 1].
    #[arg(long)]
    bpr_pair_fraction: Option<String>,
    #[arg(long)]
    bandwidth: Option<String>,
    #[arg(long)]
    output: Option<String>,
}

impl ConfigArgs {
    fn overrides(&self) -> BTreeMap<String, String> {
        let fields = [
            ("name", &self.name),
            ("dataset", &self.dataset),
            ("format", &self.format),
            ("poi_file", &self.poi_file),
            ("feedback", &self.feedback),
            ("threshold", &self.threshold),
            ("capacity", &self.capacity),
            ("propensity", &self.propensity),
            ("capacity_file", &self.capacity_file),
            ("propensity_file", &self.propensity_file),
            ("negative_sampling", &self.negative_sampling),
            ("models", &self.models),
            ("variants", &self.variants),
            ("alphas", &self.alphas),
            ("surrogate", &self.surrogate),
            ("repetitions", &self.repetitions),
            ("seeds", &self.seeds),
            ("tops", &self.tops),
            ("rank", &self.rank),
            ("lambda", &self.lambda),
            ("tol", &self.tol),
            ("max_iters", &self.max_iters),
            ("init_scale", &self.init_scale),
            ("bpr_pair_fraction", &self.bpr_pair_fraction),
            ("bandwidth", &self.bandwidth),
            ("output", &self.output),
        ];
        fields
            .into_iter()
            .filter_map(|(k, v)| v.clone().map(|v| (k.to_string(), v)))
            .collect()
    }

    fn load(&self) -> Result<ExperimentConfig> {
        match &self.config {
            Some(path) => ExperimentConfig::load(path, &self.overrides()),
            None => ExperimentConfig::from_pairs(&self.overrides()),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Filter, polarize, split and sample the raw data; write context vectors.
    Prepare(ConfigArgs),
    /// Train one cell (first model and variant) and save checkpoint + trace.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train and evaluate every (model, variant, alpha, seed) cell.
    Sweep(ConfigArgs),
    /// Post-process saved unconstrained models and evaluate the result.
    Baseline {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint on a prepared test split.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        model: Option<Family>,
        /// Weight used for the overall metric.
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let threads = cli.threads;
    let reference = cli.reference_mode;
    if threads == Some(0) {
        bail!("--threads must be >= 1");
    }
    pipeline::with_threads(threads, reference, move || match cli.command {
        Command::Prepare(args) => {
            let cfg = args.load()?;
            let s = pipeline::prepare(&cfg)?;
            println!(
                "prepared {}: {} users, {} items, {} ratings -> {}",
                cfg.name,
                s.users,
                s.items,
                s.ratings,
                cfg.prepared_dir().display()
            );
            for (seed, train, test) in s.split_sizes {
                println!("  seed {seed}: {train} train / {test} test");
            }
            if let Some(t) = s.tiles {
                println!("  {t} occupied tiles");
            }
            Ok(())
        }
        Command::Train { cfg, alpha, seed } => {
            let cfg = cfg.load()?;
            let (cell, row) = pipeline::train_one(&cfg, alpha, seed)?;
            print!("{}", report::metrics_csv(&cfg.tops, &[row]));
            eprintln!("checkpoint: {}", pipeline::checkpoint_path(&cfg, &cell).display());
            eprintln!("trace: {}", pipeline::trace_path(&cfg, &cell).display());
            Ok(())
        }
        Command::Sweep(args) => {
            let cfg = args.load()?;
            let out = pipeline::sweep(&cfg)?;
            let failed = out.rows.iter().filter(|r| r.outcome.is_err()).count();
            println!(
                "{} cells ({failed} failed) -> {}, {}",
                out.rows.len(),
                out.metrics.display(),
                out.summary.display()
            );
            Ok(())
        }
        Command::Baseline { cfg, checkpoint, seed } => {
            let cfg = cfg.load()?;
            let out = pipeline::baseline(&cfg, checkpoint.as_deref(), seed)?;
            println!("{} rows -> {}, audit {}", out.rows.len(), out.metrics.display(), out.audit.display());
            Ok(())
        }
        Command::Eval {
            cfg,
            checkpoint,
            model,
            alpha,
            seed,
        } => {
            let cfg = cfg.load()?;
            let row = pipeline::eval_checkpoint(&cfg, &checkpoint, model, alpha, seed)?;
            print!("{}", report::metrics_csv(&cfg.tops, &[row]));
            Ok(())
        }
    })?
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
