//! Command-line front end.
//!
//! Every subcommand writes its artifacts plus a `config_echo.json` into an
//! output directory: `--out`, or `$CSNA_OUTPUT_ROOT/<subcommand>` (default
//! root `runs`). Reports contain no timestamps; wall-clock times go to a
//! separate `timing.json`, so reruns with the same arguments reproduce every
//! other file byte for byte.
//!
//! Exit codes: 0 success, 2 usage, 3 data error, 4 numeric failure.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::checkpoint::Checkpoint;
use crate::csbm::{self, CsbmParams};
use crate::dataset::{self, write};
use crate::diagnostics::{self, EdgeSubset};
use crate::error::Error;
use crate::graph::{edge_homophily, Graph};
use crate::model::{GraphContext, ModelConfig, ModelKind, Normalization, Variant};
use crate::splits::{self, SplitSet, DEFAULT_SPLIT_COUNT, DEFAULT_SPLIT_SEED};
use crate::tensor::{Precision, Real};
use crate::trainer::{self, TrainHyper, TuneGrid};

pub const OUTPUT_ROOT_VAR: &str = "CSNA_OUTPUT_ROOT";

#[derive(Debug, Parser, Serialize)]
#[command(name = "csna", version, about = "Cost-sensitive neighborhood aggregation for heterophilous graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "subcommand")]
pub enum Command {
    /// Print and record summary statistics of a dataset directory.
    Inspect(InspectArgs),
    /// Generate seeded train/validation/test splits.
    Splits(SplitsArgs),
    /// Sample a CSBM graph and save it as a dataset directory.
    Generate(GenerateArgs),
    /// Train one model on one split.
    Train(TrainArgs),
    /// Grid-search hyperparameters on the tuning splits.
    Tune(TuneArgs),
    /// Train on every split and aggregate test accuracy.
    Benchmark(BenchmarkArgs),
    /// Monte Carlo scaling-factor estimates on CSBM graphs.
    Csbm(CsbmArgs),
    /// Routing diagnostics of a trained checkpoint.
    Diagnose(DiagnoseArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Inspect(_) => "inspect",
            Command::Splits(_) => "splits",
            Command::Generate(_) => "generate",
            Command::Train(_) => "train",
            Command::Tune(_) => "tune",
            Command::Benchmark(_) => "benchmark",
            Command::Csbm(_) => "csbm",
            Command::Diagnose(_) => "diagnose",
        }
    }

    fn out(&self) -> &Option<PathBuf> {
        match self {
            Command::Inspect(a) => &a.out.out,
            Command::Splits(a) => &a.out.out,
            Command::Generate(a) => &a.out.out,
            Command::Train(a) => &a.out.out,
            Command::Tune(a) => &a.out.out,
            Command::Benchmark(a) => &a.out.out,
            Command::Csbm(a) => &a.out.out,
            Command::Diagnose(a) => &a.out.out,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct OutArgs {
    /// Output directory [default: $CSNA_OUTPUT_ROOT/<subcommand>, root "runs"]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct InspectArgs {
    /// Dataset directory
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct SplitsArgs {
    /// Take the node count from this dataset directory
    #[arg(long, conflicts_with = "n", required_unless_present = "n")]
    pub n_from: Option<PathBuf>,
    /// Node count
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of splits
    #[arg(long, default_value_t = DEFAULT_SPLIT_COUNT)]
    pub k: usize,
    #[arg(long, default_value_t = DEFAULT_SPLIT_SEED)]
    pub seed: u64,
    /// Train,validation,test fractions summing to 1
    #[arg(long, value_delimiter = ',', default_values_t = splits::DEFAULT_RATIOS)]
    pub ratios: Vec<f64>,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutArgs,
}

#[derive(Debug, Args, Serialize, Clone, Copy)]
pub struct CsbmSpec {
    /// Intra-class edge probability, in (0, 1)
    #[arg(long, default_value_t = 0.01)]
    pub p: f64,
    /// Inter-class edge probability, in (0, 1)
    #[arg(long, default_value_t = 0.04)]
    pub q: f64,
    /// Node count, a multiple of the class count
    #[arg(long, default_value_t = 4000)]
    pub n: usize,
    /// Class-mean separation
    #[arg(long, default_value_t = 2.0)]
    pub mu: f64,
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    /// Feature dimension
    #[arg(long, default_value_t = 8)]
    pub dim: usize,
    /// Standard deviation of the feature noise
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
}

impl CsbmSpec {
    fn params(&self) -> Result<CsbmParams, Failure> {
        for (flag, v) in [("--p", self.p), ("--q", self.q)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Failure::Usage(format!("{flag} must lie strictly between 0 and 1, got {v}")));
            }
        }
        let params = CsbmParams {
            n: self.n,
            classes: self.classes,
            p: self.p,
            q: self.q,
            mu: self.mu,
            dim: self.dim,
            feature_noise: self.noise,
        };
        params.validate().map_err(|e| Failure::Usage(e.to_string()))?;
        Ok(params)
    }
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub csbm: CsbmSpec,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KindArg {
    Mlp,
    Gcn,
    Csna,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantArg {
    Lite,
    Extended,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SideArg {
    PerSource,
    PerDestination,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PrecisionArg {
    F32,
    F64,
}

#[derive(Debug, Args, Serialize)]
pub struct DataArgs {
    /// Dataset directory
    #[arg(long)]
    pub data: PathBuf,
    /// splits.json [default: 10 splits of 60/20/20 with seed 42]
    #[arg(long)]
    pub splits: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value_t = KindArg::Csna)]
    pub model: KindArg,
    #[arg(long, value_enum, default_value_t = VariantArg::Lite)]
    pub variant: VariantArg,
    /// Graph layers after the input MLP
    #[arg(long, default_value_t = ModelConfig::DEFAULT_LAYERS)]
    pub layers: usize,
    #[arg(long, default_value_t = ModelConfig::DEFAULT_DROPOUT)]
    pub dropout: f64,
    /// Per-epoch probability of dropping an undirected edge
    #[arg(long, default_value_t = 0.0)]
    pub edge_sampling: f64,
    /// Endpoint whose neighborhood the routing softmax runs over
    #[arg(long, value_enum, default_value_t = SideArg::PerSource)]
    pub normalization: SideArg,
    /// Weight of the calibration term
    #[arg(long, default_value_t = ModelConfig::DEFAULT_LAMBDA_CAL)]
    pub lambda_cal: f64,
}

impl ModelArgs {
    fn config(&self, graph: &Graph) -> ModelConfig {
        let kind = match self.model {
            KindArg::Mlp => ModelKind::Mlp,
            KindArg::Gcn => ModelKind::Gcn,
            KindArg::Csna => ModelKind::Csna,
        };
        ModelConfig {
            variant: match self.variant {
                VariantArg::Lite => Variant::Lite,
                VariantArg::Extended => Variant::Extended,
            },
            layers: self.layers,
            dropout: self.dropout,
            edge_sampling: self.edge_sampling,
            normalization: match self.normalization {
                SideArg::PerSource => Normalization::PerSource,
                SideArg::PerDestination => Normalization::PerDestination,
            },
            lambda_cal: self.lambda_cal,
            ..ModelConfig::new(kind, graph.feature_dim(), 64, graph.num_classes())
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct HyperArgs {
    #[arg(long, default_value_t = trainer::LR_GRID[0])]
    pub lr: f64,
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    /// Routing temperature
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    #[arg(long, default_value_t = trainer::WEIGHT_DECAY)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = trainer::PATIENCE)]
    pub patience: usize,
    #[arg(long, default_value_t = trainer::MAX_EPOCHS)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl HyperArgs {
    fn hyper(&self) -> TrainHyper {
        TrainHyper {
            lr: self.lr,
            hidden: self.hidden,
            tau: self.tau,
            weight_decay: self.weight_decay,
            patience: self.patience,
            max_epochs: self.epochs,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct RunArgs {
    #[arg(long, value_enum, default_value_t = PrecisionArg::F64)]
    pub precision: PrecisionArg,
    /// Worker threads for independent runs
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Index into the split set
    #[arg(long, default_value_t = 0)]
    pub split: usize,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long, value_enum, default_value_t = PrecisionArg::F64)]
    pub precision: PrecisionArg,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GridArg {
    /// lr {0.01, 0.005} x hidden {64, 128} x tau {0.1, 0.5, 1, 2}; 200 epochs on 3 splits
    Small,
    /// lr {0.01, 0.005} x hidden {64} x tau {0.1, 0.5, 1, 2}; 150 epochs on 2 splits
    Large,
}

#[derive(Debug, Args, Serialize)]
pub struct TuneArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long, value_enum, default_value_t = GridArg::Small)]
    pub grid: GridArg,
    /// Override the grid's epoch cap
    #[arg(long)]
    pub tune_epochs: Option<usize>,
    /// Override the grid's number of tuning splits
    #[arg(long)]
    pub tune_splits: Option<usize>,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Take lr, hidden and tau from a tune.json written by `tune`
    #[arg(long)]
    pub from_tune: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct CsbmArgs {
    #[command(flatten)]
    pub csbm: CsbmSpec,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    /// Weight of same-class edges
    #[arg(long, default_value_t = 1.0)]
    pub w_plus: f64,
    /// Weight of cross-class edges
    #[arg(long, default_value_t = 1.0)]
    pub w_minus: f64,
    /// Sweep w+/w- over these multiples of q/p instead of a single weighting
    #[arg(long, value_delimiter = ',')]
    pub sweep_ratio: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for independent trials
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgesArg {
    /// Every edge of the graph
    All,
    /// Edges touching a test node of the chosen split
    Test,
}

#[derive(Debug, Args, Serialize)]
pub struct DiagnoseArgs {
    /// checkpoint.json written by `train`
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = EdgesArg::All)]
    pub edges: EdgesArg,
    /// Split whose test nodes `--edges test` uses
    #[arg(long, default_value_t = 0)]
    pub split: usize,
    #[arg(long, default_value_t = diagnostics::DEFAULT_BINS)]
    pub bins: usize,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutArgs,
}

/// Why a command stopped.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(Error),
    Numeric(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numeric() {
            Failure::Numeric(e.to_string())
        } else {
            Failure::Data(e)
        }
    }
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Data(_) => 3,
            Failure::Numeric(_) => 4,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Data(e) => write!(f, "error: {e}"),
            Failure::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

type CmdResult = Result<(), Failure>;

struct Output {
    dir: PathBuf,
}

impl Output {
    fn put(&self, name: &str, contents: &str) -> Result<(), Error> {
        write(&self.dir.join(name), contents)
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), Error> {
        self.put(name, &(serde_json::to_string_pretty(value)? + "\n"))
    }
}

fn output_dir(command: &Command) -> PathBuf {
    command.out().clone().unwrap_or_else(|| {
        let root = std::env::var_os(OUTPUT_ROOT_VAR).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
        root.join(command.name())
    })
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run_from<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.exit_code())
        }
    }
}

pub fn main() -> ExitCode {
    run_from(std::env::args_os())
}

pub fn run(cli: &Cli) -> CmdResult {
    let out = Output {
        dir: output_dir(&cli.command),
    };
    out.json("config_echo.json", &cli.command)?;
    match &cli.command {
        Command::Inspect(a) => inspect(a, &out),
        Command::Splits(a) => cmd_splits(a, &out),
        Command::Generate(a) => generate(a, &out),
        Command::Train(a) => match a.precision {
            PrecisionArg::F64 => cmd_train::<f64>(a, &out),
            PrecisionArg::F32 => cmd_train::<f32>(a, &out),
        },
        Command::Tune(a) => match a.run.precision {
            PrecisionArg::F64 => cmd_tune::<f64>(a, &out),
            PrecisionArg::F32 => cmd_tune::<f32>(a, &out),
        },
        Command::Benchmark(a) => match a.run.precision {
            PrecisionArg::F64 => cmd_benchmark::<f64>(a, &out),
            PrecisionArg::F32 => cmd_benchmark::<f32>(a, &out),
        },
        Command::Csbm(a) => cmd_csbm(a, &out),
        Command::Diagnose(a) => cmd_diagnose(a, &out),
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    name: &'a str,
    n: usize,
    d: usize,
    classes: usize,
    undirected_edges: usize,
    edge_homophily: f64,
    class_counts: Vec<usize>,
}

fn inspect(a: &InspectArgs, out: &Output) -> CmdResult {
    let g = dataset::load_graph(&a.data)?;
    let mut class_counts = vec![0; g.num_classes()];
    g.labels().iter().for_each(|&y| class_counts[y] += 1);
    let s = Summary {
        name: g.name(),
        n: g.num_nodes(),
        d: g.feature_dim(),
        classes: g.num_classes(),
        undirected_edges: g.undirected_edge_count(),
        edge_homophily: edge_homophily(&g),
        class_counts,
    };
    println!(
        "{}: n={} |E|={} d={} C={} homophily={:.4}",
        s.name, s.n, s.undirected_edges, s.d, s.classes, s.edge_homophily
    );
    out.json("summary.json", &s)?;
    Ok(())
}

fn cmd_splits(a: &SplitsArgs, out: &Output) -> CmdResult {
    let ratios: [f64; 3] = a.ratios.as_slice().try_into().map_err(|_| Failure::Usage("--ratios needs three values".into()))?;
    splits::check_ratios(ratios).map_err(|e| Failure::Usage(format!("--ratios: {e}")))?;
    let n = match (&a.n_from, a.n) {
        (Some(dir), _) => dataset::read_meta(dir)?.n,
        (None, Some(n)) => n,
        (None, None) => return Err(Failure::Usage("one of --n-from or --n is required".into())),
    };
    let set = splits::generate_splits(n, ratios, a.k, a.seed).map_err(|e| Failure::Usage(e.to_string()))?;
    set.save(out.dir.join("splits.json"))?;
    let (tr, va, te) = set.splits.first().map_or((0, 0, 0), |s| s.sizes());
    println!("{} splits of n={n} ({tr}/{va}/{te}) -> {}", set.len(), out.dir.join("splits.json").display());
    Ok(())
}

fn generate(a: &GenerateArgs, out: &Output) -> CmdResult {
    let params = a.csbm.params()?;
    let g = csbm::sample_csbm(&params, a.seed)?;
    dataset::save_graph(&g, &out.dir)?;
    println!(
        "{}: n={} |E|={} homophily={:.4} -> {}",
        g.name(),
        g.num_nodes(),
        g.undirected_edge_count(),
        edge_homophily(&g),
        out.dir.display()
    );
    Ok(())
}

fn load_data(d: &DataArgs) -> Result<(Graph, SplitSet), Failure> {
    let g = dataset::load_graph(&d.data)?;
    let set = match &d.splits {
        Some(path) => SplitSet::load(path)?,
        None => splits::generate_splits(g.num_nodes(), splits::DEFAULT_RATIOS, DEFAULT_SPLIT_COUNT, DEFAULT_SPLIT_SEED)?,
    };
    set.validate(g.num_nodes())?;
    Ok((g, set))
}

fn checked_config(m: &ModelArgs, g: &Graph, hyper: &TrainHyper) -> Result<ModelConfig, Failure> {
    let config = hyper.apply(&m.config(g));
    config.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    hyper.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(config)
}

#[derive(Serialize)]
struct Timing {
    wall_clock_secs: f64,
}

fn cmd_train<R: Real>(a: &TrainArgs, out: &Output) -> CmdResult {
    let (g, set) = load_data(&a.data)?;
    let split = set.splits.get(a.split).ok_or_else(|| {
        Failure::Usage(format!("--split {} out of range ({} splits)", a.split, set.len()))
    })?;
    let hyper = a.hyper.hyper();
    let config = checked_config(&a.model, &g, &hyper)?;
    let ctx = GraphContext::<R>::new(&g, config.normalization)?;
    let outcome = trainer::train(&config, &ctx, split, &hyper)?;
    let r = &outcome.report;
    out.put("report.json", &r.to_json()?)?;
    out.put("history.csv", &r.history_csv())?;
    outcome.checkpoint().save(out.dir.join("checkpoint.json"))?;
    out.json("timing.json", &Timing {
        wall_clock_secs: r.wall_clock_secs,
    })?;
    if let Some(f) = &r.failure {
        return Err(Failure::Numeric(f.clone()));
    }
    println!(
        "{} ({}) split {}: best val {:.4} at epoch {}, test {:.4}",
        config.kind.name(),
        R::NAME,
        a.split,
        r.best_val_acc,
        r.best_val_epoch,
        r.test_accuracy.unwrap_or(f64::NAN)
    );
    Ok(())
}

fn cmd_tune<R: Real>(a: &TuneArgs, out: &Output) -> CmdResult {
    let (g, set) = load_data(&a.data)?;
    let (grid, epochs, count) = match a.grid {
        GridArg::Small => (TuneGrid::small(), trainer::TUNE_EPOCHS_SMALL, trainer::TUNE_SPLITS_SMALL),
        GridArg::Large => (TuneGrid::large(), trainer::TUNE_EPOCHS_LARGE, trainer::TUNE_SPLITS_LARGE),
    };
    let count = a.tune_splits.unwrap_or(count);
    if count == 0 || count > set.len() {
        return Err(Failure::Usage(format!("--tune-splits {count} outside 1..={}", set.len())));
    }
    let hyper = TrainHyper {
        max_epochs: a.tune_epochs.unwrap_or(epochs),
        ..a.hyper.hyper()
    };
    let base = checked_config(&a.model, &g, &hyper)?;
    let ctx = GraphContext::<R>::new(&g, base.normalization)?;
    let started = Instant::now();
    let report = trainer::tune(&base, &ctx, &set.splits[..count], &grid, &hyper, a.run.jobs)?;
    out.put("tune.json", &report.to_json()?)?;
    out.json("timing.json", &Timing {
        wall_clock_secs: started.elapsed().as_secs_f64(),
    })?;
    println!(
        "best lr={} hidden={} tau={} mean val {:.4} over {} cells",
        report.best.lr,
        report.best.hidden,
        report.best.tau,
        report.best_mean_val_acc,
        report.cells.len()
    );
    Ok(())
}

fn cmd_benchmark<R: Real>(a: &BenchmarkArgs, out: &Output) -> CmdResult {
    let (g, set) = load_data(&a.data)?;
    let mut hyper = a.hyper.hyper();
    if let Some(path) = &a.from_tune {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Data(Error::Io {
            path: path.clone(),
            source: e,
        }))?;
        let tuned: trainer::TuneReport = serde_json::from_str(&text).map_err(Error::from)?;
        hyper.lr = tuned.best.lr;
        hyper.hidden = tuned.best.hidden;
        hyper.tau = tuned.best.tau;
    }
    let base = checked_config(&a.model, &g, &hyper)?;
    let ctx = GraphContext::<R>::new(&g, base.normalization)?;
    let report = trainer::run_benchmark(&base, &ctx, &set.splits, &hyper, a.run.jobs)?;
    out.put("benchmark.json", &report.to_json()?)?;
    out.put("benchmark.csv", &report.to_csv())?;
    out.json("timing.json", &Timing {
        wall_clock_secs: report.wall_clock_secs,
    })?;
    if report.test_accuracies.is_empty() {
        return Err(Failure::Numeric("every split failed".into()));
    }
    if !report.failed_splits.is_empty() {
        eprintln!("warning: splits {:?} failed and are excluded", report.failed_splits);
    }
    println!(
        "{} on {}: {:.2} ± {:.2} over {} splits",
        base.kind.name(),
        g.name(),
        100.0 * report.mean,
        100.0 * report.std,
        report.test_accuracies.len()
    );
    Ok(())
}

fn cmd_csbm(a: &CsbmArgs, out: &Output) -> CmdResult {
    let params = a.csbm.params()?;
    if a.trials == 0 {
        return Err(Failure::Usage("--trials must be positive".into()));
    }
    match &a.sweep_ratio {
        Some(multiples) => {
            if multiples.iter().any(|m| !(*m > 0.0)) {
                return Err(Failure::Usage("--sweep-ratio values must be positive".into()));
            }
            let threshold = params.q / params.p;
            let ratios: Vec<f64> = multiples.iter().map(|m| m * threshold).collect();
            let sweep = csbm::sign_boundary_sweep(&params, &ratios, a.trials, a.seed, a.jobs)?;
            out.put("sweep.json", &sweep.to_json()?)?;
            out.put("trials.csv", &csbm::trials_csv(sweep.reports()))?;
            println!("sign boundary at w+/w- = q/p = {threshold}");
            println!("{:>10} {:>10} {:>11} {:>10} {:>5}", "w+/w-", "predicted", "empirical", "se", "ok");
            for row in &sweep.rows {
                println!(
                    "{:>10.4} {:>10.5} {:>11.5} {:>10.5} {:>5}",
                    row.ratio,
                    row.report.predicted,
                    row.report.empirical,
                    row.report.standard_error.unwrap_or(0.0),
                    if row.consistent { "yes" } else { "no" }
                );
            }
        }
        None => {
            let r = csbm::monte_carlo(&params, a.w_plus, a.w_minus, a.trials, a.seed, a.jobs)
                .map_err(|e| Failure::Usage(e.to_string()))?;
            out.put("theorem.json", &r.to_json()?)?;
            out.put("trials.csv", &csbm::trials_csv([&r]))?;
            println!(
                "C={} n={} p={} q={} w+={} w-={}: predicted {:.5}, empirical {:.5} ± {:.5} ({} trials)",
                r.classes,
                r.n,
                r.p,
                r.q,
                r.w_plus,
                r.w_minus,
                r.predicted,
                r.empirical,
                r.standard_error.unwrap_or(0.0),
                r.trials
            );
        }
    }
    Ok(())
}

fn cmd_diagnose(a: &DiagnoseArgs, out: &Output) -> CmdResult {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let (g, set) = load_data(&a.data)?;
    let (subset, nodes) = match a.edges {
        EdgesArg::All => (EdgeSubset::All, Vec::new()),
        EdgesArg::Test => {
            let split = set.splits.get(a.split).ok_or_else(|| {
                Failure::Usage(format!("--split {} out of range ({} splits)", a.split, set.len()))
            })?;
            (EdgeSubset::Incident, split.test.clone())
        }
    };
    if a.bins < 2 {
        return Err(Failure::Usage("--bins must be at least 2".into()));
    }
    let report = match ck.precision {
        Precision::F64 => diagnostics::diagnose(&ck.to_model::<f64>()?, &g, subset, &nodes, a.bins)?,
        Precision::F32 => diagnostics::diagnose(&ck.to_model::<f32>()?, &g, subset, &nodes, a.bins)?,
    };
    out.put("diagnostics.json", &report.to_json()?)?;
    let Some(hist) = &report.histogram else {
        println!("{} checkpoint has no edge routing; AUC and gates are absent", report.model.name());
        return Ok(());
    };
    out.put("cost_hist.csv", &hist.to_csv())?;
    for l in &report.layers {
        let [c, d, s] = l.gate_means;
        println!(
            "layer {}: auc {} gates con {c:.3} dis {d:.3} self {s:.3}",
            l.layer,
            l.auc.map_or("n/a".to_string(), |v| format!("{v:.4}"))
        );
    }
    Ok(())
}
