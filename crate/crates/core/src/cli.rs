//! `rost` command line: online runs, the batch baseline, the full
//! scheduler comparison and synthetic stream generation.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;

use crate::error::{Result, RostError};
use crate::model::DEFAULT_CELL_SIZE;
use crate::pipeline::{self, BatchBudget, Budget, CompareConfig};
use crate::sampler::GibbsParams;
use crate::scheduler::{Scheduler, SchedulerKind};
use crate::stream_io::{self, WordStream};
use crate::synth::{self, SeparableConfig};
use crate::RostRng;

#[derive(Debug, Parser)]
#[command(name = "rost", version, about = "Streaming spatiotemporal topic modeling with realtime Gibbs refinement")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Online run with one scheduler; writes `t,n_words,instant_ppx,r_t`.
    Run(RunArgs),
    /// Batch Gibbs baseline with the same total budget as an online run.
    Batch(BatchArgs),
    /// All eight schedulers plus the batch baseline, averaged over restarts.
    Compare(CompareArgs),
    /// Generate a synthetic stream with planted block-diagonal topics.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Number of topics K.
    #[arg(long = "topics", default_value_t = 16)]
    pub topics: usize,
    /// Dirichlet prior on cell topic mixtures.
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    /// Dirichlet prior on topic word distributions.
    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,
    /// Spatial side length of a cell.
    #[arg(long, default_value_t = DEFAULT_CELL_SIZE)]
    pub cell_size: u32,
    /// Master seed; restart i uses seed + i.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl ModelArgs {
    fn params(&self) -> GibbsParams<f64> {
        GibbsParams { alpha: self.alpha, beta: self.beta, topics: self.topics, seed: self.seed }
    }
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct BudgetArgs {
    /// Refinement rounds R per observation interval.
    #[arg(long)]
    pub budget_rounds: Option<u32>,
    /// Wall-clock refinement time T_R per interval, in milliseconds.
    #[arg(long)]
    pub budget_millis: Option<u64>,
}

impl BudgetArgs {
    fn budget(&self) -> Budget {
        match (self.budget_rounds, self.budget_millis) {
            (Some(r), _) => Budget::Rounds(r),
            (None, Some(ms)) => Budget::millis(ms),
            (None, None) => unreachable!("clap enforces one budget flag"),
        }
    }
}

#[derive(Debug, Args)]
pub struct SchedulerArgs {
    /// Mixing proportion for mixed schedulers.
    #[arg(long, default_value_t = 0.5)]
    pub eta: f64,
    /// Geometric rate for exponential schedulers.
    #[arg(long, default_value_t = 0.5)]
    pub q: f64,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Input stream file.
    #[arg(long)]
    pub input: PathBuf,
    /// Output CSV.
    #[arg(long)]
    pub output: PathBuf,
    /// now, uniform, agep, exp, uniform_now, agep_now, uniform_exp or agep_exp.
    #[arg(long)]
    pub scheduler: String,
    #[command(flatten)]
    pub sched: SchedulerArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub budget: BudgetArgs,
}

#[derive(Debug, Args)]
pub struct BatchArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Per-interval budget; the batch sampler gets it times (T + 1).
    #[command(flatten)]
    pub budget: BudgetArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Comparison CSV; per-timestep ratios go to `<output stem>.ratios.csv`.
    #[arg(long)]
    pub output: PathBuf,
    /// Independent restarts per scheduler.
    #[arg(long, default_value_t = 1)]
    pub restarts: u32,
    #[command(flatten)]
    pub sched: SchedulerArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub budget: BudgetArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output stream file; ground-truth labels go to `<output>.labels`.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long = "topics", default_value_t = 8)]
    pub topics: usize,
    #[arg(long, default_value_t = 100)]
    pub vocab: usize,
    #[arg(long, default_value_t = 200)]
    pub steps: u32,
    #[arg(long, default_value_t = 50)]
    pub words_per_step: usize,
    /// Strength of the spatial topic field in [0, 1].
    #[arg(long, default_value_t = 1.0)]
    pub smoothness: f64,
    /// World width and height, in cells.
    #[arg(long, default_value_t = 4)]
    pub extent: u32,
    #[arg(long, default_value_t = DEFAULT_CELL_SIZE)]
    pub cell_size: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn load(path: &Path) -> Result<WordStream> {
    let parsed = stream_io::read_stream(path)?;
    for w in &parsed.warnings {
        eprintln!("warning: {w}");
    }
    Ok(parsed.stream)
}

pub fn cmd_run(args: &RunArgs) -> Result<()> {
    let kind: SchedulerKind = args.scheduler.parse()?;
    let scheduler = Scheduler::new(kind, args.sched.q, args.sched.eta)?;
    let stream = load(&args.input)?;
    let params = args.model.params();
    let mut rng = RostRng::seed_from_u64(params.seed);
    let report = pipeline::run_stream(&stream, scheduler, args.budget.budget(), &params, args.model.cell_size, &mut rng)?;
    stream_io::write_run_csv(&report, stream_io::create(&args.output)?)
}

pub fn cmd_batch(args: &BatchArgs) -> Result<()> {
    let stream = load(&args.input)?;
    let params = args.model.params();
    let windows = stream.num_timesteps() as u64 + 1;
    let budget = match args.budget.budget() {
        Budget::Rounds(r) => BatchBudget::Rounds(r as u64 * windows),
        Budget::WallClock(d) => BatchBudget::WallClock(d * windows as u32),
    };
    let mut rng = RostRng::seed_from_u64(params.seed);
    let report = pipeline::run_batch_baseline(&stream, budget, &params, args.model.cell_size, &mut rng)?;
    stream_io::write_run_csv(&report, stream_io::create(&args.output)?)
}

pub fn ratios_path(output: &Path) -> PathBuf {
    output.with_extension("ratios.csv")
}

pub fn cmd_compare(args: &CompareArgs) -> Result<()> {
    let stream = load(&args.input)?;
    let cfg = CompareConfig {
        kinds: SchedulerKind::ALL.to_vec(),
        q: args.sched.q,
        eta: args.sched.eta,
        budget: args.budget.budget(),
        params: args.model.params(),
        cell_size: args.model.cell_size,
        restarts: args.restarts,
    };
    let table = pipeline::compare_schedulers(&stream, &cfg)?.table()?;
    stream_io::write_comparison_csv(&table, stream_io::create(&args.output)?)?;
    stream_io::write_ratio_csv(&table, stream_io::create(ratios_path(&args.output))?)
}

pub fn labels_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".labels");
    PathBuf::from(s)
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let cfg = SeparableConfig {
        topics: args.topics,
        vocab_size: args.vocab,
        extent: args.extent,
        steps: args.steps,
        words_per_step: args.words_per_step,
        smoothness: args.smoothness,
        cell_size: args.cell_size,
        seed: args.seed,
    };
    let model = synth::make_separable::<f64>(&cfg)?;
    let (stream, labels) = synth::generate(&model);
    stream_io::write_stream(&stream, stream_io::create(&args.output)?)?;
    stream_io::write_labels(&stream, &labels, args.topics, stream_io::create(labels_path(&args.output))?)
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Batch(a) => cmd_batch(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

/// Parses arguments and runs. Returns the process exit code: 0 on success,
/// 1 on any usage, validation or I/O error.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

impl From<clap::Error> for RostError {
    fn from(e: clap::Error) -> Self {
        RostError::InvalidParameter(e.to_string())
    }
}
