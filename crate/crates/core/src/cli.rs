//! The `tnn` command line.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bench::{best_cell, is_corner, run_bench, run_sweep, write_bench_csv, write_sweep_csv, BenchConfig, Method, SweepConfig};
use crate::data::{
    generate_random_points, generate_smoothed_random_walk, load_dataset, save_dataset, split_by_time, split_per_day,
    KeyValues, RandomPointsConfig, Split, SrwConfig,
};
use crate::dataset::Dataset;
use crate::index::TrajectoryIndex;
use crate::metric::ScaleParams;
use crate::nowcast::{
    evaluate_rmse, train, tune_global_sigma, tune_knn_k, AdamConfig, Checkpoint, ContextSource, DayAverage, Forecaster,
    GkaForecaster, GkaModel, GridConfig, HourAverage, InputNorm, KnnBaseline, Persistence, Retrieval, SigmaNet,
    TrainConfig,
};
use crate::search::SearchOptions;

#[derive(Debug, Parser)]
#[command(name = "tnn", version, about = "Exact masked k-NN over trajectory data, benchmarks and wind nowcasting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a segment index and print its statistics.
    Index(IndexArgs),
    /// Time one method on queries sampled from a dataset.
    Bench(BenchArgs),
    /// Grid of TNN speedups over points per segment and fetch size.
    Sweep(SweepArgs),
    /// Train or evaluate wind forecasters.
    Nowcast(NowcastArgs),
    /// Write a synthetic dataset.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long = "k-per-segment", default_value_t = 32)]
    pub k_per_segment: usize,
    #[arg(long = "snapshot-out")]
    pub snapshot_out: Option<PathBuf>,
}

/// Options shared by `bench` and `sweep`.
#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Neighbors per query.
    #[arg(long, default_value_t = 1000)]
    pub k: usize,
    /// Mask window in seconds, or `none`.
    #[arg(long = "t-w", default_value = "0")]
    pub t_w: String,
    /// `s` for all three components or `s_xy,s_z,s_t`.
    #[arg(long, default_value = "1")]
    pub sigma: String,
    #[arg(long, default_value_t = 100)]
    pub queries: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, default_value_t = 1)]
    pub warmup: usize,
    /// Queries cross-checked against the exhaustive scan.
    #[arg(long, default_value_t = 100)]
    pub verify: usize,
    /// Run queries on all cores instead of one.
    #[arg(long)]
    pub parallel: bool,
    #[arg(long = "report-out")]
    pub report_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub query: QueryArgs,
    #[arg(long, default_value = "tnn", value_parser = ["linear", "tnn", "kdtree"])]
    pub method: String,
    /// Points per segment.
    #[arg(long = "K", default_value_t = 32)]
    pub points_per_segment: usize,
    /// Segments fetched per round.
    #[arg(long = "F", default_value_t = 8)]
    pub fetch: usize,
    #[arg(long = "leaf-size", default_value_t = 16)]
    pub leaf_size: usize,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub query: QueryArgs,
    #[arg(long = "K-list", value_delimiter = ',', num_args = 1.., required = true)]
    pub k_list: Vec<usize>,
    #[arg(long = "F-list", value_delimiter = ',', num_args = 1.., required = true)]
    pub f_list: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NowcastAction {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelName {
    Gka,
    GkaMlp,
    DayAverage,
    HourAverage,
    Knn,
    Persistence,
}

#[derive(Debug, Args)]
pub struct NowcastArgs {
    pub action: NowcastAction,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum, default_value = "gka")]
    pub model: ModelName,
    /// `key = value` settings file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Written by `train`, read by `eval`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// RMSE per split as CSV.
    #[arg(long = "report-out")]
    pub report_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GeneratorName {
    Srw,
    Random,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    pub kind: GeneratorName,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Extra `key=value` overrides.
    #[arg(long = "set")]
    pub set: Vec<String>,
}

/// Parses arguments, runs the command and maps failures to exit codes:
/// 2 for usage errors, 1 for everything else.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Index(a) => cmd_index(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Nowcast(a) => cmd_nowcast(&a),
        Command::Generate(a) => cmd_generate(&a),
    }
}

fn load(path: &Path) -> Result<Arc<Dataset>> {
    let (ds, report) = load_dataset(path).with_context(|| format!("loading {}", path.display()))?;
    if report.rejected > 0 {
        eprintln!("warning: {} rows with non-finite fields skipped", report.rejected);
    }
    if report.reordered {
        eprintln!("note: rows were reordered into canonical trajectory and time order");
    }
    Ok(Arc::new(ds))
}

fn dataset_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned())
}

pub fn parse_sigma(s: &str) -> Result<ScaleParams> {
    let v: Vec<f64> = s
        .split([',', ' '])
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().with_context(|| format!("bad sigma component `{t}`")))
        .collect::<Result<_>>()?;
    Ok(match v.as_slice() {
        [a] => ScaleParams::isotropic(*a)?,
        [a, b, c] => ScaleParams::new(*a, *b, *c)?,
        _ => bail!("sigma needs 1 or 3 components, got `{s}`"),
    })
}

fn parse_window(s: &str) -> Result<Option<f64>> {
    if s.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    let w: f64 = s.parse().with_context(|| format!("bad window `{s}`"))?;
    Ok(Some(w))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn cmd_index(a: &IndexArgs) -> Result<()> {
    let ds = load(&a.input)?;
    let start = Instant::now();
    let index = TrajectoryIndex::build(ds, a.k_per_segment)?;
    let built = start.elapsed();
    let s = index.stats();
    println!("points            {}", s.points);
    println!("points/segment    {}", s.points_per_segment);
    println!("segments (T)      {}", s.segments);
    println!("mean E            {:.6e}", s.mean_error);
    println!("max E             {:.6e}", s.max_error);
    println!("build time        {:.3} s", built.as_secs_f64());
    if let Some(p) = &a.snapshot_out {
        let mut w = create(p)?;
        index.write_snapshot(&mut w)?;
        w.flush()?;
        println!("snapshot          {}", p.display());
    }
    Ok(())
}

fn base_config(q: &QueryArgs) -> Result<BenchConfig> {
    Ok(BenchConfig {
        k: q.k,
        window: parse_window(&q.t_w)?,
        sigma: parse_sigma(&q.sigma)?,
        queries: q.queries,
        seed: q.seed,
        warmup: q.warmup,
        repeats: q.repeats,
        verify: q.verify,
        options: if q.parallel {
            SearchOptions::default()
        } else {
            SearchOptions::sequential()
        },
        ..BenchConfig::default()
    })
}

fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let ds = load(&a.query.dataset)?;
    let cfg = BenchConfig {
        method: a.method.parse::<Method>()?,
        points_per_segment: a.points_per_segment,
        fetch: a.fetch,
        leaf_size: a.leaf_size,
        ..base_config(&a.query)?
    };
    let row = run_bench(&dataset_name(&a.query.dataset), ds.clone(), &cfg)?;
    println!(
        "{} on {} ({} points): {:.1} comparisons/query ({:.2}% of N), {:.3} ms/query, verified={}",
        row.method,
        row.dataset,
        ds.len(),
        row.mean_comparisons,
        100.0 * row.mean_comparisons / ds.len() as f64,
        1e3 * row.mean_latency_seconds,
        row.exactness_verified
    );
    if row.method == Method::KdTree {
        println!("visited nodes/query: {:.1}", row.mean_visited_nodes);
    }
    match &a.query.report_out {
        Some(p) => write_bench_csv(&[row], create(p)?)?,
        None => write_bench_csv(&[row], std::io::stdout().lock())?,
    }
    Ok(())
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let ds = load(&a.query.dataset)?;
    let cfg = SweepConfig {
        points_per_segment: a.k_list.clone(),
        fetch: a.f_list.clone(),
        base: base_config(&a.query)?,
    };
    let rows = run_sweep(&dataset_name(&a.query.dataset), ds, &cfg)?;
    for r in &rows {
        println!(
            "K={:<5} F={:<5} comparisons {:>6.2}%  speedup {:>7.2}",
            r.points_per_segment, r.fetch, r.comparison_pct, r.speedup
        );
    }
    if let Some(b) = best_cell(&rows) {
        let where_ = if is_corner(&rows, b) { "corner" } else { "non-corner" };
        println!("best: K={} F={} speedup {:.2} ({where_})", b.points_per_segment, b.fetch, b.speedup);
    }
    if let Some(p) = &a.query.report_out {
        write_sweep_csv(&rows, create(p)?)?;
    }
    Ok(())
}

/// Settings for `nowcast`, read from a `key = value` file.
#[derive(Debug, Clone, PartialEq)]
pub struct NowcastSettings {
    pub train: TrainConfig,
    pub points_per_segment: usize,
    pub fetch: usize,
    pub hidden: usize,
    pub sigma: ScaleParams,
    pub knn_k: usize,
    pub split_by_day: bool,
    pub fractions: (f64, f64, f64),
    pub retrieval_linear: bool,
    /// Grid-search the global sigma (or the k-NN size) before training.
    pub tune: bool,
    /// Evaluate on at most this many points per split (0 = all).
    pub eval_limit: usize,
}

impl NowcastSettings {
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let d = TrainConfig::default();
        let ad = AdamConfig::default();
        let fractions = match kv.get_str("split_fractions") {
            None => (0.7, 0.15, 0.15),
            Some(s) => {
                let v: Vec<f64> = s.split_whitespace().map(str::parse).collect::<std::result::Result<_, _>>()?;
                let [a, b, c] = v[..] else { bail!("split_fractions needs 3 numbers") };
                (a, b, c)
            }
        };
        let split_by_day = match kv.get_str("split").unwrap_or("day") {
            "day" => true,
            "time" => false,
            other => bail!("split must be `day` or `time`, got `{other}`"),
        };
        let retrieval_linear = match kv.get_str("retrieval").unwrap_or("tnn") {
            "tnn" => false,
            "linear" => true,
            other => bail!("retrieval must be `tnn` or `linear`, got `{other}`"),
        };
        Ok(Self {
            train: TrainConfig {
                epochs: kv.get_or("epochs", d.epochs)?,
                batch_size: kv.get_or("batch_size", d.batch_size)?,
                k: kv.get_or("k", d.k)?,
                window: kv.get_or("window", d.window)?,
                adam: AdamConfig {
                    lr: kv.get_or("lr", ad.lr)?,
                    beta1: kv.get_or("beta1", ad.beta1)?,
                    beta2: kv.get_or("beta2", ad.beta2)?,
                    eps: kv.get_or("eps", ad.eps)?,
                },
                seed: kv.get_or("seed", d.seed)?,
            },
            points_per_segment: kv.get_or("points_per_segment", 32)?,
            fetch: kv.get_or("fetch", 8)?,
            hidden: kv.get_or("hidden", 32)?,
            sigma: parse_sigma(kv.get_str("sigma").unwrap_or("2.5e-9 4e-6 3e-7"))?,
            knn_k: kv.get_or("knn_k", 10)?,
            split_by_day,
            fractions,
            retrieval_linear,
            tune: kv.get_or("tune", false)?,
            eval_limit: kv.get_or("eval_limit", 0)?,
        })
    }
}

fn report_line(out: &mut Vec<[String; 6]>, model: &str, split: &str, f: &dyn Forecaster, ds: &Dataset, idx: &[usize]) -> Result<()> {
    let r = evaluate_rmse(f, ds, idx)?;
    println!(
        "{model:<14} {split:<10} rmse {:.4} kn  ({} points, {} without context, {:.2} s)",
        r.rmse,
        r.evaluated,
        r.no_context,
        r.duration.as_secs_f64()
    );
    out.push([
        model.to_string(),
        split.to_string(),
        r.rmse.to_string(),
        r.evaluated.to_string(),
        r.no_context.to_string(),
        r.duration.as_secs_f64().to_string(),
    ]);
    Ok(())
}

/// At most `n` evenly spaced entries of `v` (all of them for `n = 0`).
fn limit(v: &[usize], n: usize) -> Vec<usize> {
    if n == 0 || n >= v.len() {
        return v.to_vec();
    }
    (0..n).map(|i| v[i * v.len() / n]).collect()
}

fn cmd_nowcast(a: &NowcastArgs) -> Result<()> {
    let kv = match &a.config {
        Some(p) => KeyValues::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => KeyValues::default(),
    };
    let mut s = NowcastSettings::from_kv(&kv)?;
    s.train.validate()?;
    let ds = load(&a.dataset)?;
    let split: Split = if s.split_by_day {
        split_per_day(&ds, s.fractions)?
    } else {
        split_by_time(&ds, s.fractions)?
    };

    let gka_model = matches!(a.model, ModelName::Gka | ModelName::GkaMlp);
    let checkpoint = if gka_model && a.action == NowcastAction::Eval {
        let p = a.checkpoint.as_ref().context("eval of a kernel model needs --checkpoint")?;
        let c = Checkpoint::load(p).with_context(|| format!("reading {}", p.display()))?;
        s.train.k = c.k;
        s.train.window = c.window;
        s.points_per_segment = c.points_per_segment;
        s.fetch = c.fetch;
        Some(c)
    } else {
        None
    };

    let index = TrajectoryIndex::build(ds.clone(), s.points_per_segment)?;
    let mut source = ContextSource::tnn(&index);
    source.retrieval = if s.retrieval_linear {
        Retrieval::Linear
    } else {
        Retrieval::Tnn { fetch: s.fetch }
    };
    let val = &limit(&split.validation, s.eval_limit)[..];
    let test = &limit(&split.test, s.eval_limit)[..];
    let mut rows = Vec::new();
    let name = a.model.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default();

    let forecaster: Box<dyn Forecaster + '_> = match a.model {
        ModelName::DayAverage => Box::new(DayAverage::fit(&ds)),
        ModelName::HourAverage => Box::new(HourAverage::fit(&ds)),
        ModelName::Persistence => Box::new(Persistence {
            dataset: &ds,
            sigma: s.sigma,
            window: s.train.window,
            options: SearchOptions::default(),
        }),
        ModelName::Knn => {
            let mut k = s.knn_k;
            if s.tune && a.action == NowcastAction::Train {
                let (best, r) = tune_knn_k(&source, s.sigma, s.train.window, &[1, 2, 5, 10, 20, 50, 100], val)?;
                println!("tuned k = {best} (validation rmse {r:.4})");
                k = best;
            }
            Box::new(KnnBaseline {
                source,
                k,
                sigma: s.sigma,
                window: s.train.window,
            })
        }
        ModelName::Gka | ModelName::GkaMlp => {
            let model = match checkpoint {
                Some(c) => c.model,
                None => {
                    let mut sigma = s.sigma;
                    if s.tune {
                        let (best, r) = tune_global_sigma(&source, sigma, s.train.k, s.train.window, val, &GridConfig::default())?;
                        println!("tuned sigma = {:?} (validation rmse {r:.4})", best.as_array());
                        sigma = best;
                    }
                    let init = if a.model == ModelName::Gka {
                        GkaModel::Global(sigma)
                    } else {
                        let norm = InputNorm::fit(split.train.iter().map(|&i| ds.position(i)).collect::<Vec<_>>().iter());
                        GkaModel::Net(SigmaNet::new(s.hidden, sigma, norm, s.train.seed)?)
                    };
                    let (model, epochs) = train(&source, &split.train, init, &s.train)?;
                    for e in &epochs {
                        println!(
                            "epoch {:>3}  loss {:.6}  {:.2} s  ({} samples, {} without context)",
                            e.epoch,
                            e.loss,
                            e.duration.as_secs_f64(),
                            e.samples,
                            e.skipped
                        );
                    }
                    if let GkaModel::Global(sg) = &model {
                        println!("sigma = {:?}", sg.as_array());
                    }
                    if let Some(p) = &a.checkpoint {
                        Checkpoint {
                            model: model.clone(),
                            k: s.train.k,
                            window: s.train.window,
                            points_per_segment: s.points_per_segment,
                            fetch: s.fetch,
                        }
                        .save(p)
                        .with_context(|| format!("writing {}", p.display()))?;
                        println!("checkpoint written to {}", p.display());
                    }
                    model
                }
            };
            Box::new(GkaForecaster {
                model,
                source,
                k: s.train.k,
                window: s.train.window,
            })
        }
    };

    report_line(&mut rows, &name, "validation", forecaster.as_ref(), &ds, val)?;
    report_line(&mut rows, &name, "test", forecaster.as_ref(), &ds, test)?;
    if let Some(p) = &a.report_out {
        let mut w = csv::Writer::from_writer(create(p)?);
        w.write_record(["model", "split", "rmse", "evaluated", "no_context", "seconds"])?;
        for r in &rows {
            w.write_record(r)?;
        }
        w.flush()?;
    }
    Ok(())
}

fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    let mut kv = match &a.config {
        Some(p) => KeyValues::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => KeyValues::default(),
    };
    for s in &a.set {
        let (k, v) = s.split_once('=').with_context(|| format!("expected key=value, got `{s}`"))?;
        kv.set(k.trim(), v.trim());
    }
    if let Some(seed) = a.seed {
        kv.set("seed", seed);
    }
    let ds = match a.kind {
        GeneratorName::Srw => generate_smoothed_random_walk(&SrwConfig::from_kv(&kv)?)?,
        GeneratorName::Random => generate_random_points(&RandomPointsConfig::from_kv(&kv)?)?,
    };
    save_dataset(&ds, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    println!("{} points in {} trajectories written to {}", ds.len(), ds.trajectories().len(), a.out.display());
    Ok(())
}
