//! The `qldpc` command line.
//!
//! Every command prints its effective configuration as JSON before doing any
//! work. Exit codes: 0 success, 2 usage or configuration error, 3 runtime
//! failure.

use std::ffi::OsString;
use std::io::Write;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use qldpc_core::channel::{prior_llr, Recipe};
use qldpc_core::eval::{CurvePoint, SweepConfig};
use qldpc_core::gnn::{gnn_mean_loss, train_gnn_from, GnnHyperparams, GnnModel};
use qldpc_core::nbp::{train_nbp_from, NbpConfig, NbpModel, NbpTrainConfig};
use qldpc_core::nn::GradClip;
use qldpc_core::{ChannelParams, CssCode, Dataset};

use crate::checkpoint::{Checkpoint, ClipDoc, ModelSpec, TrainingMeta};
use crate::config::{
    BpSpec, CodeSpec, DatasetSpec, DecoderSpec, ExperimentConfig, NbpTrainingSpec, OsdStrategyName,
    SweepSpec, TrainingSpec, BICYCLE_K, BICYCLE_N, BICYCLE_ROW_WEIGHT, BICYCLE_SEED,
};
use crate::curve::{self, LogRow};
use crate::error::{check_parent_dir, write_atomic, write_atomic_with};
use crate::sweep::{available_workers, run_sweep_parallel, WORKERS_ENV};
use crate::{bundle, dataset, FormatError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, inputs or configuration.
    Usage(String),
    /// The work itself failed.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

trait Classify<T> {
    fn usage(self) -> Result<T, CliError>;
    fn runtime(self) -> Result<T, CliError>;
}

impl<T, E: std::fmt::Display> Classify<T> for Result<T, E> {
    fn usage(self) -> Result<T, CliError> {
        self.map_err(|e| CliError::Usage(e.to_string()))
    }

    fn runtime(self) -> Result<T, CliError> {
        self.map_err(|e| CliError::Runtime(e.to_string()))
    }
}

fn usage<T>(message: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Usage(message.into()))
}

#[derive(Debug, Parser)]
#[command(name = "qldpc", version, about = "Build QLDPC codes, train neural decoders and measure logical error rates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Code construction.
    #[command(subcommand)]
    Code(CodeCommand),
    /// Dataset generation.
    #[command(subcommand)]
    Data(DataCommand),
    /// Model training.
    #[command(subcommand)]
    Train(TrainCommand),
    /// Logical error rate sweep over physical error rates.
    Sweep(SweepArgs),
    /// Run a whole experiment from a JSON config file.
    Run(RunArgs),
}

#[derive(Debug, Subcommand)]
pub enum CodeCommand {
    /// Build a code and optionally save it as a bundle.
    Build(CodeBuildArgs),
}

#[derive(Debug, Subcommand)]
pub enum DataCommand {
    /// Generate a JSON Lines dataset.
    Gen(DataGenArgs),
}

#[derive(Debug, Subcommand)]
pub enum TrainCommand {
    /// Train the graph neural network decoder.
    Gnn(TrainGnnArgs),
    /// Train neural belief propagation weights.
    Nbp(TrainNbpArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Hgp,
    Bicycle,
}

#[derive(Debug, Clone, Serialize, Args)]
pub struct CodeBuildArgs {
    #[arg(long, value_enum)]
    pub family: Family,
    /// Bicycle generator seed (ignored by hgp).
    #[arg(long, default_value_t = BICYCLE_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = BICYCLE_N)]
    pub n: usize,
    #[arg(long, default_value_t = BICYCLE_K)]
    pub k: usize,
    /// Circulant row weight of a bicycle code.
    #[arg(long, default_value_t = BICYCLE_ROW_WEIGHT)]
    pub row_weight: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RecipeName {
    /// Forced zero and weight-one entries, then truncated-binomial weights.
    Train,
    /// Plain channel draws.
    Test,
}

#[derive(Debug, Clone, Serialize, Args)]
pub struct DataGenArgs {
    #[arg(long)]
    pub code: PathBuf,
    #[arg(long)]
    pub pf: f64,
    #[arg(long)]
    pub count: usize,
    #[arg(long, value_enum, default_value_t = RecipeName::Train)]
    pub recipe: RecipeName,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Args)]
pub struct TrainCommon {
    #[arg(long)]
    pub code: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint path, rewritten after every epoch.
    #[arg(long)]
    pub out: PathBuf,
    /// Loss log CSV; defaults to the checkpoint path with a `.loss.csv` extension.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Continue from this checkpoint; architecture comes from the file.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Also save Adam moments so a resumed run continues exactly.
    #[arg(long)]
    pub save_optimizer: bool,
    /// Stop after the first epoch that ends past this many seconds.
    #[arg(long)]
    pub max_seconds: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Args)]
pub struct TrainGnnArgs {
    #[command(flatten)]
    pub common: TrainCommon,
    /// Message-passing rounds K.
    #[arg(long, default_value_t = GnnHyperparams::default().layers)]
    pub layers: usize,
    /// Node embedding width s.
    #[arg(long, default_value_t = GnnHyperparams::default().embed)]
    pub embed: usize,
    /// Message width u.
    #[arg(long, default_value_t = GnnHyperparams::default().message)]
    pub message: usize,
    #[arg(long, default_value_t = GnnHyperparams::default().hidden)]
    pub hidden: usize,
    #[arg(long)]
    pub untied: bool,
    #[arg(long)]
    pub simultaneous: bool,
    #[arg(long, default_value_t = GnnHyperparams::default().lr)]
    pub lr: f64,
    #[arg(long, default_value_t = GnnHyperparams::default().batch_size)]
    pub batch: usize,
    /// Global gradient-norm clip; 0 disables clipping.
    #[arg(long, default_value_t = 0.5)]
    pub clip: f64,
    #[arg(long, default_value_t = GnnHyperparams::default().epochs)]
    pub epochs: usize,
    /// Plateau patience in epochs; 0 disables the plateau stop.
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    #[arg(long, default_value_t = GnnHyperparams::default().plateau_tol)]
    pub plateau_tol: f64,
    /// Graphs per forward/backward pass inside a minibatch.
    #[arg(long, default_value_t = GnnHyperparams::default().chunk)]
    pub chunk: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Skip the epoch-0 loss evaluation before training.
    #[arg(long)]
    pub skip_initial_loss: bool,
}

#[derive(Debug, Clone, Serialize, Args)]
pub struct TrainNbpArgs {
    #[command(flatten)]
    pub common: TrainCommon,
    #[arg(long, default_value_t = NbpConfig::default().iterations)]
    pub iterations: usize,
    /// One weight set shared across iterations.
    #[arg(long)]
    pub tied: bool,
    #[arg(long, default_value_t = NbpConfig::default().llr_clamp)]
    pub llr_clamp: f64,
    #[arg(long, default_value_t = NbpTrainConfig::default().epochs)]
    pub epochs: usize,
    #[arg(long, default_value_t = NbpTrainConfig::default().batch_size)]
    pub batch: usize,
    #[arg(long, default_value_t = NbpTrainConfig::default().lr)]
    pub lr: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    #[arg(long, default_value_t = 0.5)]
    pub clip: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DecoderKind {
    Bp,
    BpOsd,
    Nbp,
    Gnn,
}

#[derive(Debug, Clone, Serialize, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub code: PathBuf,
    #[arg(long, value_enum)]
    pub decoder: DecoderKind,
    /// OSD order for bp-osd.
    #[arg(long, default_value_t = 0)]
    pub order: usize,
    #[arg(long, value_enum, default_value_t = OsdStrategyName::CombinationSweep)]
    pub osd_strategy: OsdStrategyName,
    /// Cap on OSD candidates, counting the order-0 solution.
    #[arg(long)]
    pub candidate_limit: Option<usize>,
    /// Checkpoint for nbp or gnn.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Comma-separated physical error rates.
    #[arg(long, value_delimiter = ',', required = true)]
    pub pf_list: Vec<f64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output prefix; writes PREFIX.txt and PREFIX.csv.
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; results do not depend on this.
    #[arg(long, env = WORKERS_ENV)]
    pub workers: Option<usize>,
    /// Stop a point early after this many failures.
    #[arg(long)]
    pub max_failures: Option<u64>,
    #[arg(long, default_value_t = 1000)]
    pub block: u64,
    #[arg(long, default_value_t = BpSpec::default().max_iter)]
    pub bp_iters: usize,
    #[arg(long, default_value_t = BpSpec::default().llr_clamp)]
    pub llr_clamp: f64,
    #[arg(long)]
    pub no_early_stop: bool,
    /// Syndromes per GNN forward pass.
    #[arg(long, default_value_t = 4)]
    pub gnn_batch: usize,
}

#[derive(Debug, Clone, Serialize, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Print the effective config and stop.
    #[arg(long)]
    pub dry_run: bool,
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let (kind, msg) = match &e {
                CliError::Usage(m) => ("error", m),
                CliError::Runtime(m) => ("runtime error", m),
            };
            let _ = writeln!(err, "{kind}: {msg}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Code(CodeCommand::Build(a)) => code_build(&a, out),
        Command::Data(DataCommand::Gen(a)) => data_gen(&a, out),
        Command::Train(TrainCommand::Gnn(a)) => train_gnn_cmd(&a, out),
        Command::Train(TrainCommand::Nbp(a)) => train_nbp_cmd(&a, out),
        Command::Sweep(a) => sweep_cmd(&a, out),
        Command::Run(a) => run_cmd(&a, out),
    }
}

fn echo<T: Serialize>(out: &mut dyn Write, command: &str, config: &T) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct Effective<'a, T> {
        command: &'a str,
        config: &'a T,
    }
    let text = serde_json::to_string_pretty(&Effective { command, config }).runtime()?;
    writeln!(out, "# effective config\n{text}").runtime()
}

fn say(out: &mut dyn Write, line: impl std::fmt::Display) -> Result<(), CliError> {
    writeln!(out, "{line}").runtime()
}

fn describe(code: &CssCode) -> String {
    format!(
        "code {}: [[{}, {}]] n={} k={} m={} (Hx {}x{}, Hz {}x{}) max row weight {} max column weight {} fingerprint {}",
        code.name,
        code.n,
        code.k,
        code.n,
        code.k,
        code.m(),
        code.hx.rows(),
        code.hx.cols(),
        code.hz.rows(),
        code.hz.cols(),
        code.row_bound,
        code.col_bound,
        bundle::fingerprint_hex(code)
    )
}

fn check_out_dir(path: &Path) -> Result<(), CliError> {
    check_parent_dir(path).usage()
}

fn load_code(path: &Path) -> Result<CssCode, CliError> {
    bundle::load(path).usage()
}

fn clip_from(value: f64) -> GradClip {
    if value > 0.0 {
        GradClip::GlobalNorm(value)
    } else {
        GradClip::None
    }
}

fn code_build(a: &CodeBuildArgs, out: &mut dyn Write) -> Result<(), CliError> {
    echo(out, "code build", a)?;
    if let Some(path) = &a.out {
        check_out_dir(path)?;
    }
    let spec = match a.family {
        Family::Hgp => CodeSpec::Hgp,
        Family::Bicycle => CodeSpec::Bicycle {
            n: a.n,
            k: a.k,
            row_weight: a.row_weight,
            seed: a.seed,
        },
    };
    let code = spec.build().runtime()?;
    say(out, describe(&code))?;
    if let Some(path) = &a.out {
        bundle::save(&code, path).runtime()?;
        say(out, format!("wrote {}", path.display()))?;
    }
    Ok(())
}

fn recipe_of(r: RecipeName) -> Recipe {
    match r {
        RecipeName::Train => Recipe::Train,
        RecipeName::Test => Recipe::Test,
    }
}

fn write_dataset_file(code: &CssCode, spec: &DatasetSpec, recipe: Recipe, path: &Path) -> Result<(), CliError> {
    let channel = ChannelParams::new(spec.p_f).usage()?;
    prior_llr(channel).usage()?;
    if recipe == Recipe::Train && spec.count < 2 * code.n + 1 {
        return usage(format!(
            "the train recipe needs at least 2n + 1 = {} entries, got {}",
            2 * code.n + 1,
            spec.count
        ));
    }
    check_out_dir(path)?;
    write_atomic_with(path, |w| dataset::generate(w, code, channel, recipe, spec.count, spec.seed)).runtime()
}

fn data_gen(a: &DataGenArgs, out: &mut dyn Write) -> Result<(), CliError> {
    echo(out, "data gen", a)?;
    let code = load_code(&a.code)?;
    let spec = DatasetSpec {
        p_f: a.pf,
        count: a.count,
        seed: a.seed,
    };
    write_dataset_file(&code, &spec, recipe_of(a.recipe), &a.out)?;
    say(out, format!("wrote {} entries to {}", a.count, a.out.display()))
}

fn load_training_inputs(common: &TrainCommon) -> Result<(CssCode, Dataset), CliError> {
    let code = load_code(&common.code)?;
    let data = dataset::load(&common.data).usage()?;
    data.verify(&code)
        .map_err(|e| CliError::Usage(format!("dataset {} does not fit code {}: {e}", common.data.display(), code.name)))?;
    if data.is_empty() {
        return usage("dataset is empty");
    }
    check_out_dir(&common.out)?;
    Ok((code, data))
}

fn log_path(common: &TrainCommon) -> PathBuf {
    common.log.clone().unwrap_or_else(|| common.out.with_extension("loss.csv"))
}

/// Log rows kept from an earlier run of a resumed model.
fn previous_log(path: &Path, epochs: usize) -> Vec<LogRow> {
    std::fs::read_to_string(path)
        .ok()
        .and_then(|t| curve::parse_log_csv(&t).ok())
        .map(|rows| rows.into_iter().filter(|r| r.epoch <= epochs).collect())
        .unwrap_or_default()
}

struct Session {
    started: Instant,
    prior_epochs: usize,
    prior_seconds: f64,
    rows: Vec<LogRow>,
    log: PathBuf,
    max_seconds: Option<f64>,
}

impl Session {
    fn new(common: &TrainCommon, resumed: Option<&TrainingMeta>) -> Self {
        let log = log_path(common);
        let (prior_epochs, prior_seconds) = resumed.map_or((0, 0.0), |m| (m.epochs, m.wall_seconds));
        let rows = if resumed.is_some() { previous_log(&log, prior_epochs) } else { Vec::new() };
        Self {
            started: Instant::now(),
            prior_epochs,
            prior_seconds,
            rows,
            log,
            max_seconds: common.max_seconds,
        }
    }

    fn elapsed(&self) -> f64 {
        self.prior_seconds + self.started.elapsed().as_secs_f64()
    }

    fn record(&mut self, epoch: usize, mean_loss: f64) -> Result<(), FormatError> {
        self.rows.push(LogRow {
            epoch,
            mean_loss,
            wall_seconds: self.elapsed(),
        });
        write_atomic(&self.log, curve::to_log_csv(&self.rows)?.as_bytes())
    }

    fn meta(&self, seed: u64, epochs_run: usize, final_loss: Option<f64>, data: &Dataset) -> TrainingMeta {
        TrainingMeta {
            seed,
            epochs: self.prior_epochs + epochs_run,
            step: 0,
            final_loss,
            wall_seconds: self.elapsed(),
            dataset_size: data.len(),
            dataset_p_f: Some(data.meta.p_f),
        }
    }

    fn over_budget(&self) -> bool {
        self.max_seconds
            .is_some_and(|m| self.started.elapsed().as_secs_f64() >= m)
    }
}

fn load_resume(path: &Option<PathBuf>) -> Result<Option<Checkpoint>, CliError> {
    path.as_deref().map(Checkpoint::load).transpose().usage()
}

fn train_gnn_cmd(a: &TrainGnnArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut hp = GnnHyperparams {
        layers: a.layers,
        embed: a.embed,
        message: a.message,
        hidden: a.hidden,
        untied: a.untied,
        simultaneous: a.simultaneous,
        lr: a.lr,
        batch_size: a.batch,
        clip: clip_from(a.clip),
        epochs: a.epochs,
        plateau_patience: (a.patience > 0).then_some(a.patience),
        plateau_tol: a.plateau_tol,
        chunk: a.chunk,
        seed: a.seed,
    };
    let resume = load_resume(&a.common.resume)?;
    if let Some(ckpt) = &resume {
        let ModelSpec::Gnn(saved) = ckpt.model else {
            return usage("resume checkpoint does not hold a GNN");
        };
        let saved: GnnHyperparams = saved.into();
        hp.layers = saved.layers;
        hp.embed = saved.embed;
        hp.message = saved.message;
        hp.hidden = saved.hidden;
        hp.untied = saved.untied;
        hp.simultaneous = saved.simultaneous;
    }
    hp.validate().usage()?;
    #[derive(Serialize)]
    struct Echo<'a> {
        args: &'a TrainGnnArgs,
        hyperparams: crate::checkpoint::GnnHyperparamsDoc,
    }
    echo(
        out,
        "train gnn",
        &Echo {
            args: a,
            hyperparams: hp.into(),
        },
    )?;
    say(
        out,
        format!(
            "gnn: K={} s={} u={} hidden={} lr={:e} batch={} clip={} epochs={} seed={}",
            hp.layers,
            hp.embed,
            hp.message,
            hp.hidden,
            hp.lr,
            hp.batch_size,
            a.clip,
            hp.epochs,
            hp.seed
        ),
    )?;
    let (code, data) = load_training_inputs(&a.common)?;
    let model = match &resume {
        Some(ckpt) => {
            let mut m = ckpt.to_gnn(&code).usage()?;
            m.hp = hp;
            m
        }
        None => GnnModel::for_code(&code, hp).usage()?,
    };
    let mut session = Session::new(&a.common, resume.as_ref().map(|c| &c.training));
    let graph = code.tanner_graph();
    let mut last_loss = resume.as_ref().and_then(|c| c.training.final_loss);
    if !a.skip_initial_loss && resume.is_none() {
        let loss = gnn_mean_loss(&model, &graph, &data.entries).runtime()?;
        say(out, format!("epoch 0 loss {loss:.6}"))?;
        session.record(0, loss).runtime()?;
    }
    let save = |model: &GnnModel, session: &Session, epochs_run: usize, loss: Option<f64>| {
        Checkpoint::from_gnn(&code, model, session.meta(hp.seed, epochs_run, loss, &data), a.common.save_optimizer)
            .save(&a.common.out)
    };
    let mut failure: Option<FormatError> = None;
    let prior = session.prior_epochs;
    let result = train_gnn_from(&code, model, &data, |report, model| {
        let epoch = prior + report.epoch;
        let _ = writeln!(out, "epoch {epoch} loss {:.6} step {} t {:.1}s", report.mean_loss, report.step, session.elapsed());
        last_loss = Some(report.mean_loss);
        let saved = session
            .record(epoch, report.mean_loss)
            .and_then(|_| save(model, &session, report.epoch, Some(report.mean_loss)));
        if let Err(e) = saved {
            failure = Some(e);
            return ControlFlow::Break(());
        }
        if session.over_budget() {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })
    .runtime()?;
    if let Some(e) = failure {
        return Err(CliError::Runtime(e.to_string()));
    }
    save(&result.model, &session, result.history.len(), last_loss).runtime()?;
    say(
        out,
        format!(
            "wrote {} after {} epochs ({} steps); log {}",
            a.common.out.display(),
            prior + result.history.len(),
            result.model.store.step(),
            session.log.display()
        ),
    )
}

fn train_nbp_cmd(a: &TrainNbpArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut config = NbpTrainConfig {
        model: NbpConfig {
            iterations: a.iterations,
            tied: a.tied,
            llr_clamp: a.llr_clamp,
            ..NbpConfig::default()
        },
        epochs: a.epochs,
        batch_size: a.batch,
        lr: a.lr,
        clip: clip_from(a.clip),
        seed: a.seed,
    };
    let resume = load_resume(&a.common.resume)?;
    if let Some(ckpt) = &resume {
        let ModelSpec::Nbp(saved) = ckpt.model else {
            return usage("resume checkpoint does not hold an NBP model");
        };
        config.model = saved.into();
    }
    if config.model.iterations == 0 || config.batch_size == 0 || !(config.lr > 0.0) {
        return usage("iterations, batch and lr must be positive");
    }
    #[derive(Serialize)]
    struct Echo<'a> {
        args: &'a TrainNbpArgs,
        model: crate::checkpoint::NbpConfigDoc,
    }
    echo(
        out,
        "train nbp",
        &Echo {
            args: a,
            model: config.model.into(),
        },
    )?;
    let (code, data) = load_training_inputs(&a.common)?;
    let graph = code.tanner_graph();
    let model = match &resume {
        Some(ckpt) => ckpt.to_nbp(&code).usage()?,
        None => NbpModel::new(&graph, config.model),
    };
    let mut session = Session::new(&a.common, resume.as_ref().map(|c| &c.training));
    let prior = session.prior_epochs;
    let mut failure: Option<FormatError> = None;
    let result = train_nbp_from(&code, &graph, model, &data, &config, |report| {
        let epoch = prior + report.epoch;
        let _ = writeln!(out, "epoch {epoch} loss {:.6} step {} t {:.1}s", report.mean_loss, report.step, session.elapsed());
        if let Err(e) = session.record(epoch, report.mean_loss) {
            failure = Some(e);
            return ControlFlow::Break(());
        }
        if session.over_budget() {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })
    .runtime()?;
    if let Some(e) = failure {
        return Err(CliError::Runtime(e.to_string()));
    }
    if resume.is_none() {
        say(out, format!("epoch 0 loss {:.6}", result.initial_loss))?;
        session.rows.insert(
            0,
            LogRow {
                epoch: 0,
                mean_loss: result.initial_loss,
                wall_seconds: 0.0,
            },
        );
        write_atomic(&session.log, curve::to_log_csv(&session.rows).runtime()?.as_bytes()).runtime()?;
    }
    let final_loss = result.history.last().map(|r| r.mean_loss);
    Checkpoint::from_nbp(
        &code,
        &result.model,
        session.meta(config.seed, result.history.len(), final_loss, &data),
        a.common.save_optimizer,
    )
    .save(&a.common.out)
    .runtime()?;
    say(
        out,
        format!(
            "wrote {} after {} epochs ({} steps); log {}",
            a.common.out.display(),
            prior + result.history.len(),
            result.model.store.step(),
            session.log.display()
        ),
    )
}

fn curve_paths(prefix: &Path) -> (PathBuf, PathBuf) {
    let base = prefix.as_os_str().to_owned();
    let with = |ext: &str| {
        let mut p = base.clone();
        p.push(ext);
        PathBuf::from(p)
    };
    (with(".txt"), with(".csv"))
}

/// Runs a sweep and writes `PREFIX.txt` and `PREFIX.csv`.
fn sweep_and_write(
    code: &CssCode,
    decoder: &DecoderSpec,
    checkpoint: Option<&Checkpoint>,
    p_list: &[f64],
    spec: &SweepSpec,
    prefix: &Path,
    out: &mut dyn Write,
) -> Result<Vec<CurvePoint>, CliError> {
    let (txt, csv) = curve_paths(prefix);
    check_out_dir(&txt)?;
    for &p in p_list {
        prior_llr(ChannelParams::new(p).usage()?).usage()?;
    }
    let dec = decoder.instantiate(code, checkpoint).usage()?;
    let config = SweepConfig {
        trials: spec.trials,
        seed: spec.seed,
        max_failures: spec.max_failures,
        block: spec.block.max(1),
    };
    let started = Instant::now();
    let points = run_sweep_parallel(code, dec.as_ref(), p_list, &config, spec.workers, |p| {
        let _ = writeln!(
            out,
            "p_f {} trials {} failures {} ler {:.6e} ci [{:.6e}, {:.6e}] t {:.1}s",
            p.p_f,
            p.trials,
            p.failures,
            p.ler,
            p.ci_low,
            p.ci_high,
            started.elapsed().as_secs_f64()
        );
    })
    .runtime()?;
    write_atomic(&txt, curve::to_xy(&points, decoder.label()).as_bytes()).runtime()?;
    write_atomic(&csv, curve::to_curve_csv(&points).runtime()?.as_bytes()).runtime()?;
    say(out, format!("wrote {} and {}", txt.display(), csv.display()))?;
    Ok(points)
}

fn sweep_cmd(a: &SweepArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let bp = BpSpec {
        max_iter: a.bp_iters,
        llr_clamp: a.llr_clamp,
        early_stop: !a.no_early_stop,
    };
    let decoder = match a.decoder {
        DecoderKind::Bp => DecoderSpec::Bp { bp },
        DecoderKind::BpOsd => DecoderSpec::BpOsd {
            bp,
            order: a.order,
            strategy: a.osd_strategy,
            candidate_limit: a.candidate_limit,
        },
        DecoderKind::Nbp => DecoderSpec::Nbp { model: a.model.clone() },
        DecoderKind::Gnn => DecoderSpec::Gnn {
            model: a.model.clone(),
            batch: a.gnn_batch.max(1),
        },
    };
    let spec = SweepSpec {
        trials: a.trials,
        seed: a.seed,
        max_failures: a.max_failures,
        block: a.block.max(1),
        workers: a.workers.unwrap_or_else(available_workers).max(1),
    };
    #[derive(Serialize)]
    struct Echo<'a> {
        code: &'a Path,
        decoder: &'a DecoderSpec,
        pf_list: &'a [f64],
        sweep: &'a SweepSpec,
        out: &'a Path,
    }
    echo(
        out,
        "sweep",
        &Echo {
            code: &a.code,
            decoder: &decoder,
            pf_list: &a.pf_list,
            sweep: &spec,
            out: &a.out,
        },
    )?;
    if decoder.is_learned() && a.model.is_none() {
        return usage(format!("decoder {} needs --model", decoder.label()));
    }
    let code = load_code(&a.code)?;
    let checkpoint = a.model.as_deref().map(Checkpoint::load).transpose().usage()?;
    sweep_and_write(&code, &decoder, checkpoint.as_ref(), &a.pf_list, &spec, &a.out, out)?;
    Ok(())
}

fn run_cmd(a: &RunArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&a.config)
        .map_err(|e| CliError::Usage(format!("{}: {e}", a.config.display())))?;
    let config = ExperimentConfig::from_json(&text).usage()?;
    echo(out, "run", &config)?;
    if a.dry_run {
        return Ok(());
    }
    run_experiment(&config, out)
}

/// Builds the code, trains a model when one is needed, then sweeps.
pub fn run_experiment(config: &ExperimentConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let code = config.code.build().usage()?;
    say(out, describe(&code))?;
    let code_path = config.output.path(".code.json");
    bundle::save(&code, &code_path).runtime()?;
    let checkpoint = match (config.decoder.model_path(), config.decoder.is_learned()) {
        (Some(path), _) => Some(Checkpoint::load(path).usage()?),
        (None, true) => Some(train_for_experiment(config, &code, &code_path, out)?),
        (None, false) => None,
    };
    sweep_and_write(
        &code,
        &config.decoder,
        checkpoint.as_ref(),
        &config.p_f,
        &config.sweep,
        &config.output.path(""),
        out,
    )?;
    Ok(())
}

fn train_for_experiment(
    config: &ExperimentConfig,
    code: &CssCode,
    code_path: &Path,
    out: &mut dyn Write,
) -> Result<Checkpoint, CliError> {
    let (Some(ds), Some(training)) = (&config.dataset, &config.training) else {
        return usage("learned decoder without model needs dataset and training sections");
    };
    let data_path = config.output.path(".data.jsonl");
    write_dataset_file(code, ds, Recipe::Train, &data_path)?;
    say(out, format!("wrote {} entries to {}", ds.count, data_path.display()))?;
    let ckpt_path = config.output.path(".ckpt.json");
    let common = TrainCommon {
        code: code_path.to_path_buf(),
        data: data_path,
        out: ckpt_path.clone(),
        log: None,
        resume: None,
        save_optimizer: false,
        max_seconds: None,
    };
    match training {
        TrainingSpec::Gnn(hp) => {
            let hp: GnnHyperparams = (*hp).into();
            let clip = match hp.clip {
                GradClip::GlobalNorm(v) => v,
                _ => 0.0,
            };
            train_gnn_cmd(
                &TrainGnnArgs {
                    common,
                    layers: hp.layers,
                    embed: hp.embed,
                    message: hp.message,
                    hidden: hp.hidden,
                    untied: hp.untied,
                    simultaneous: hp.simultaneous,
                    lr: hp.lr,
                    batch: hp.batch_size,
                    clip,
                    epochs: hp.epochs,
                    patience: hp.plateau_patience.unwrap_or(0),
                    plateau_tol: hp.plateau_tol,
                    chunk: hp.chunk,
                    seed: hp.seed,
                    skip_initial_loss: false,
                },
                out,
            )?;
        }
        TrainingSpec::Nbp(NbpTrainingSpec {
            model,
            epochs,
            batch_size,
            lr,
            clip,
            seed,
        }) => {
            let clip = match clip {
                ClipDoc::GlobalNorm(v) => *v,
                _ => 0.0,
            };
            train_nbp_cmd(
                &TrainNbpArgs {
                    common,
                    iterations: model.iterations,
                    tied: model.tied,
                    llr_clamp: model.llr_clamp,
                    epochs: *epochs,
                    batch: *batch_size,
                    lr: *lr,
                    clip,
                    seed: *seed,
                },
                out,
            )?;
        }
    }
    Checkpoint::load(&ckpt_path).runtime()
}
