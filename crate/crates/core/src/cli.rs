//! Command-line front end.
//!
//! ```text
//! alexbench fetch  --dataset mnist [--data-dir DIR] [--base-url URL]
//! alexbench run    [--config FILE] [--dataset ..] [--strategy ..] [--q N] [--p N]
//!                  [--seed N] [--arch conv|dense] [--reps N] [--pool-limit N]
//!                  [--heatmaps N] [--out-dir DIR] [--set key=value ...]
//! alexbench render --model FILE [--dataset ..] [--heatmaps N] [--out-dir DIR]
//! alexbench export --report FILE [--out FILE]
//! ```

use std::ffi::OsString;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use log::info;

use crate::data::{self, Dataset, DatasetId, LabeledPool, Split, NUM_CLASSES};
use crate::explainer::{explain_indices, fit_surrogate, ExplainerConfig, PatchGrid, SurrogateModel};
use crate::harness::{self, ALConfig, HarnessError, RunOptions, RunReport};
use crate::model::{checkpoint, ArchId, ClassifierModel};
use crate::output;

pub const DATA_DIR_ENV: &str = "ALEXBENCH_DATA_DIR";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    UnknownFlag(String),
    #[error("{0}")]
    InvalidValue(String),
    #[error("config file {0} not found")]
    MissingConfig(PathBuf),
    /// Usage text for a missing or malformed command line.
    #[error("{0}")]
    Usage(String),
    /// `--help` or `--version` output.
    #[error("{0}")]
    Help(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Help(_) => 0,
            _ => 2,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "alexbench", version, about = "Active-learning benchmark runner", arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Download the IDX files of a benchmark.
    Fetch(FetchArgs),
    /// Run the bootstrapping experiment and write report.csv.
    Run(RunArgs),
    /// Render attribution heatmaps from a saved model.
    Render(RenderArgs),
    /// Turn a report into an accuracy-curve table.
    Export(ExportArgs),
}

#[derive(Args, Debug)]
struct FetchArgs {
    #[arg(long, default_value = "mnist")]
    dataset: DatasetId,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Mirror to download from instead of the default.
    #[arg(long)]
    base_url: Option<String>,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Flat key=value file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<DatasetId>,
    /// rs, us-p, us-m, dw, alex, a comma list, or all.
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    arch: Option<ArchId>,
    #[arg(long)]
    reps: Option<usize>,
    /// Subsample the train pool to this many instances.
    #[arg(long)]
    pool_limit: Option<usize>,
    /// Heatmaps per class rendered from the final repetition-0 model.
    #[arg(long, default_value_t = 0)]
    heatmaps: usize,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Any config key, e.g. `--set epochs=10`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Save per-step state here and resume from it.
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,
    /// Record wall-clock milliseconds (reports then differ between runs).
    #[arg(long)]
    timing: bool,
    /// Run repetitions one at a time.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "mnist")]
    dataset: DatasetId,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    heatmaps: usize,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 2)]
    patch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[arg(long)]
    report: PathBuf,
    /// Defaults to curves.csv next to the report.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunPlan {
    pub config: ALConfig,
    pub out_dir: PathBuf,
    pub data_dir: PathBuf,
    pub heatmaps: usize,
    pub options: RunOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CliConfig {
    Fetch {
        dataset: DatasetId,
        data_dir: PathBuf,
        base_url: Option<String>,
    },
    Run(RunPlan),
    Render {
        model: PathBuf,
        dataset: DatasetId,
        data_dir: PathBuf,
        heatmaps: usize,
        out_dir: PathBuf,
        patch_size: usize,
        seed: u64,
    },
    Export {
        report: PathBuf,
        out: PathBuf,
    },
}

fn data_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data"))
}

fn invalid(e: HarnessError) -> CliError {
    CliError::InvalidValue(e.to_string())
}

fn plan(args: RunArgs) -> Result<RunPlan, CliError> {
    let mut cfg = ALConfig::default();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).map_err(|_| CliError::MissingConfig(path.clone()))?;
        cfg.apply_text(&text).map_err(invalid)?;
    }
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::InvalidValue(format!("expected key=value, got `{kv}`")))?;
        cfg.set(k.trim(), v).map_err(invalid)?;
    }
    if let Some(d) = args.dataset {
        cfg.dataset = d;
    }
    if let Some(s) = &args.strategy {
        cfg.strategies = harness::config::parse_strategies(s).map_err(invalid)?;
    }
    if let Some(q) = args.q {
        cfg.q = q;
    }
    if let Some(p) = args.p {
        cfg.p = p;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(arch) = args.arch {
        cfg.arch = arch;
    }
    if let Some(reps) = args.reps {
        cfg.repetitions = reps;
    }
    if args.pool_limit.is_some() {
        cfg.pool_limit = args.pool_limit;
    }
    cfg.validate().map_err(invalid)?;
    Ok(RunPlan {
        config: cfg,
        out_dir: args.out_dir,
        data_dir: data_dir(args.data_dir),
        heatmaps: args.heatmaps,
        options: RunOptions {
            timing: args.timing,
            checkpoint_dir: args.checkpoint_dir,
            sequential: args.sequential,
        },
    })
}

/// Parses a full argument vector, program name first.
pub fn parse_args<I, T>(argv: I) -> Result<CliConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| {
        let text = e.render().to_string();
        match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => CliError::Help(text),
            ErrorKind::UnknownArgument | ErrorKind::InvalidSubcommand => CliError::UnknownFlag(text),
            ErrorKind::InvalidValue | ErrorKind::ValueValidation => CliError::InvalidValue(text),
            _ => CliError::Usage(text),
        }
    })?;
    Ok(match cli.command {
        Sub::Fetch(a) => CliConfig::Fetch {
            dataset: a.dataset,
            data_dir: data_dir(a.data_dir),
            base_url: a.base_url,
        },
        Sub::Run(a) => CliConfig::Run(plan(a)?),
        Sub::Render(a) => {
            if a.patch_size == 0 || 28 % a.patch_size != 0 {
                return Err(CliError::InvalidValue("--patch-size must divide 28".into()));
            }
            CliConfig::Render {
                model: a.model,
                dataset: a.dataset,
                data_dir: data_dir(a.data_dir),
                heatmaps: a.heatmaps,
                out_dir: a.out_dir,
                patch_size: a.patch_size,
                seed: a.seed,
            }
        }
        Sub::Export(a) => {
            let out = a
                .out
                .unwrap_or_else(|| a.report.with_file_name("curves.csv"));
            CliConfig::Export { report: a.report, out }
        }
    })
}

pub fn default_base_url(dataset: DatasetId) -> &'static str {
    match dataset {
        DatasetId::Mnist => "https://ossci-datasets.s3.amazonaws.com/mnist/",
        DatasetId::Fmnist => "http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/",
    }
}

fn fetch(dataset: DatasetId, root: &Path, base_url: Option<&str>) -> anyhow::Result<()> {
    let dir = root.join(dataset.as_str());
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let base = base_url.unwrap_or(default_base_url(dataset)).trim_end_matches('/');
    for split in [Split::Train, Split::Test] {
        for name in [data::image_file_name(split), data::label_file_name(split)] {
            let url = format!("{base}/{name}.gz");
            info!("downloading {url}");
            let mut body = Vec::new();
            ureq::get(&url)
                .call()
                .with_context(|| format!("GET {url}"))?
                .into_reader()
                .read_to_end(&mut body)?;
            let target = dir.join(format!("{name}.gz"));
            fs::write(&target, &body).with_context(|| format!("writing {}", target.display()))?;
        }
    }
    let loaded = data::load_dataset(root, dataset)?;
    println!(
        "{}: {} train / {} test images in {}",
        dataset,
        loaded.train.len(),
        loaded.test.len(),
        dir.display()
    );
    Ok(())
}

/// First `per_class` test indices of every class, ascending.
pub fn heatmap_samples(labels: &[u8], per_class: usize) -> Vec<(usize, u8)> {
    let mut taken = [0usize; NUM_CLASSES];
    let mut out = Vec::new();
    for (i, &y) in labels.iter().enumerate() {
        if taken[usize::from(y)] < per_class {
            taken[usize::from(y)] += 1;
            out.push((i, y));
        }
    }
    out.sort_by_key(|&(i, y)| (y, i));
    out
}

/// Writes one PPM per sample into `dir` as `class<y>_<index>.ppm`. Returns
/// the number of files written.
pub fn write_heatmaps(
    model: &ClassifierModel,
    surrogate: &SurrogateModel,
    split: &data::RawDataset,
    samples: &[(usize, u8)],
    dir: &Path,
) -> anyhow::Result<usize> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let indices: Vec<usize> = samples.iter().map(|&(i, _)| i).collect();
    let explanations = explain_indices(surrogate, model, split.features(), &indices)?;
    for (&(i, y), e) in samples.iter().zip(&explanations) {
        let path = dir.join(format!("class{y}_{i}.ppm"));
        output::render_heatmap(&split.features().get(i).values, e, surrogate.grid(), &path)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(samples.len())
}

fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn run(plan: &RunPlan) -> anyhow::Result<()> {
    let cfg = &plan.config;
    let data = data::load_dataset(&plan.data_dir, cfg.dataset)
        .with_context(|| format!("loading {} from {}", cfg.dataset, plan.data_dir.display()))?;
    run_on(plan, &data)
}

/// [`run`] with the dataset already in memory.
pub fn run_on(plan: &RunPlan, data: &Dataset) -> anyhow::Result<()> {
    let cfg = &plan.config;
    fs::create_dir_all(&plan.out_dir).with_context(|| format!("creating {}", plan.out_dir.display()))?;
    let outcome = harness::run_experiment(cfg, data, &plan.options)?;
    let report = &outcome.report;
    let expected = cfg.strategies.len() * cfg.repetitions * (cfg.p + 1);
    if report.records.len() != expected {
        bail!("report has {} records, expected {expected}", report.records.len());
    }
    write_file(&plan.out_dir.join("report.csv"), &report.to_csv())?;
    write_file(&plan.out_dir.join("diagnostics.csv"), &report.diagnostics_csv())?;
    output::export_curves(report, &plan.out_dir.join("curves.csv"))?;

    let models = plan.out_dir.join("models");
    fs::create_dir_all(&models)?;
    for fin in &outcome.finals {
        checkpoint::save(&fin.model, &models.join(format!("{}.model", fin.strategy)))?;
        if plan.heatmaps > 0 {
            let seed = harness::derive_seed(cfg.seed, cfg.p as u64, harness::tag::SURROGATE);
            let surrogate = fit_surrogate(&fin.model, &fin.labeled, data.train.features(), &cfg.explainer, seed)?;
            let samples = heatmap_samples(&data.test.labels, plan.heatmaps);
            let dir = plan.out_dir.join("heatmaps").join(fin.strategy.as_str());
            write_heatmaps(&fin.model, &surrogate, &data.test, &samples, &dir)?;
        }
    }
    for &s in &cfg.strategies {
        let curve = report.mean_curve(s);
        println!(
            "{s}: final mean accuracy {:.4} (|S|={})",
            curve.last().copied().unwrap_or(f64::NAN),
            cfg.final_labeled()
        );
    }
    println!("wrote {}", plan.out_dir.join("report.csv").display());
    Ok(())
}

/// The surrogate is fitted on neighbourhoods of the rendered instances
/// themselves, since the saved model carries no labeled pool.
fn render(
    model_path: &Path,
    dataset: DatasetId,
    data_dir: &Path,
    per_class: usize,
    out_dir: &Path,
    patch_size: usize,
    seed: u64,
) -> anyhow::Result<()> {
    let model = checkpoint::load(model_path).with_context(|| format!("loading {}", model_path.display()))?;
    let test = data::load_split(&data::dataset_dir(data_dir, dataset), Split::Test)?;
    let samples = heatmap_samples(&test.labels, per_class);
    let pool = LabeledPool::from_entries(samples.clone())?;
    let cfg = ExplainerConfig {
        patch_size,
        ..Default::default()
    };
    PatchGrid::square(data::IMAGE_SIDE, patch_size)?;
    let surrogate = fit_surrogate(&model, &pool, test.features(), &cfg, seed)?;
    let n = write_heatmaps(&model, &surrogate, &test, &samples, out_dir)?;
    println!("wrote {n} heatmaps to {}", out_dir.display());
    Ok(())
}

fn export(report_path: &Path, out: &Path) -> anyhow::Result<()> {
    let text = fs::read_to_string(report_path).with_context(|| format!("reading {}", report_path.display()))?;
    let report = RunReport::parse_csv(&text)?;
    output::export_curves(&report, out).with_context(|| format!("writing {}", out.display()))?;
    println!("wrote {}", out.display());
    Ok(())
}

pub fn execute(cfg: &CliConfig) -> anyhow::Result<()> {
    match cfg {
        CliConfig::Fetch {
            dataset,
            data_dir,
            base_url,
        } => fetch(*dataset, data_dir, base_url.as_deref()),
        CliConfig::Run(plan) => run(plan),
        CliConfig::Render {
            model,
            dataset,
            data_dir,
            heatmaps,
            out_dir,
            patch_size,
            seed,
        } => render(model, *dataset, data_dir, *heatmaps, out_dir, *patch_size, *seed),
        CliConfig::Export { report, out } => export(report, out),
    }
}
