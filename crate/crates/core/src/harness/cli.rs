//! `activerec` command line.
//!
//! Every subcommand that trains or evaluates takes `--config FILE` (TOML,
//! see [`ExperimentConfig`]); flags given alongside override the file.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use super::gradsuite::{run_suite, DEFAULT_CONFIGS, DEFAULT_TOLERANCE};
use super::{
    agent_method_name, curves, evaluate, load_data, load_vgd, make_splits, read_rows, run_experiment, table,
    write_rows, write_table, EvalMode, ExperimentConfig, HarnessError, Method, ResultRow, StepRow,
};
use crate::agent::{rollout, PolicyMode, TraceRecord};
use crate::envgrid::{generate_synthetic, save_dataset, Dataset, SyntheticSpec};
use crate::ndgrad::Tape;
use crate::rng::Stream;
use crate::train::{hyperparam_search, write_history, write_ledger, Checkpoint, SearchSpace, Trainer};

#[derive(Parser, Debug)]
#[command(name = "activerec", version, about = "Active recognition on viewgrid environments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset and write it as a VGD file.
    GenData(GenDataArgs),
    /// Train one agent and write its checkpoints and history.
    Train(TrainArgs),
    /// Score a checkpoint on a VGD file at one or more horizons.
    Eval(EvalArgs),
    /// Run a non-agent baseline over the configured seeds.
    Baseline(RunArgs),
    /// Run any method over the configured seeds.
    Run(RunArgs),
    /// Random hyperparameter search for the agent.
    Search(SearchArgs),
    /// Mean and standard error per method and horizon from result CSVs.
    Table(TableArgs),
    /// Accuracy against time step from per-step CSVs.
    Curves(TableArgs),
    /// Export episodes of a checkpoint as newline-delimited JSON.
    Traces(TracesArgs),
    /// Finite-difference check of every layer, module and loss.
    GradCheck(GradCheckArgs),
}

#[derive(Args, Debug, Default)]
struct Overrides {
    /// Experiment config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// VGD dataset, replacing any synthetic spec.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    method: Option<Method>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Episode length T.
    #[arg(long)]
    steps: Option<usize>,
    /// Comma-separated horizons to report.
    #[arg(long, value_delimiter = ',')]
    eval_steps: Option<Vec<usize>>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Overrides {
    fn resolve(&self) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(d) = &self.data {
            cfg.data.path = Some(d.clone());
            cfg.data.synthetic = None;
        }
        if let Some(m) = self.method {
            cfg.method = m;
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = s.clone();
        }
        if let Some(t) = self.steps {
            cfg.steps = t;
        }
        if let Some(h) = &self.eval_steps {
            cfg.eval_steps = h.clone();
        }
        if let Some(v) = self.epochs {
            cfg.train.epochs = v;
        }
        if let Some(v) = self.patience {
            cfg.train.patience = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.train.learning_rate = v;
        }
        if let Some(v) = self.lambda {
            cfg.train.lambda = v;
        }
        if let Some(v) = self.batch_size {
            cfg.train.batch_size = v;
        }
        if let Some(o) = &self.out {
            cfg.output = o.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct GenDataArgs {
    /// Take `data.synthetic` from this experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 6)]
    classes: usize,
    #[arg(long, default_value_t = 6)]
    elevations: usize,
    #[arg(long, default_value_t = 6)]
    azimuths: usize,
    #[arg(long, default_value_t = 16)]
    feature_dim: usize,
    #[arg(long, default_value_t = 150)]
    per_class: usize,
    /// Every view identifies the class.
    #[arg(long)]
    degenerate: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    o: Overrides,
    /// Continue from `last.ckpt` and `best.ckpt` in the output directory.
    #[arg(long)]
    resume: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitArg {
    All,
    Train,
    Val,
    Test,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// VGD dataset.
    #[arg(long)]
    data: PathBuf,
    /// Part of the dataset to score, split with the checkpoint's seed.
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Comma-separated horizons; defaults to the trained T.
    #[arg(long, value_delimiter = ',')]
    steps: Option<Vec<usize>>,
    /// Average the class probabilities of heads 1..=t.
    #[arg(long)]
    average: bool,
    /// Evaluation seed; defaults to the checkpoint's.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the rows to this CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    o: Overrides,
}

#[derive(Args, Debug)]
struct SearchArgs {
    #[command(flatten)]
    o: Overrides,
    #[arg(long, default_value_t = 20)]
    budget: usize,
}

#[derive(Args, Debug)]
struct TableArgs {
    /// CSV files written by `run`, `baseline` or `eval`.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TracesArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Number of episodes; defaults to one per instance.
    #[arg(long)]
    episodes: Option<usize>,
    /// Sample motions from the policy instead of taking the greedy one.
    #[arg(long)]
    sample: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GradCheckArgs {
    #[arg(long, default_value_t = DEFAULT_CONFIGS)]
    configs: usize,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    tolerance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Parses `args` (including the program name) and runs the subcommand.
/// Returns the process exit code: 0 on success, 2 for usage errors, then
/// [`HarnessError::code`].
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("activerec: {e}");
            e.code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), HarnessError> {
    match cmd {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Baseline(a) => {
            let cfg = a.o.resolve()?;
            if cfg.method.is_agent() && cfg.method != Method::RandomRecurrent {
                return Err(HarnessError::Config(format!("{} is not a baseline; use `run`", cfg.method)));
            }
            run_cmd(cfg)
        }
        Command::Run(a) => run_cmd(a.o.resolve()?),
        Command::Search(a) => search_cmd(a),
        Command::Table(a) => table_cmd(a),
        Command::Curves(a) => curves_cmd(a),
        Command::Traces(a) => traces_cmd(a),
        Command::GradCheck(a) => grad_check_cmd(a),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| HarnessError::Runtime(format!("{}: {e}", dir.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| HarnessError::Runtime(format!("{}: {e}", path.display())))
}

fn csv_err(e: csv::Error) -> HarnessError {
    HarnessError::Runtime(e.to_string())
}

fn gen_data(a: GenDataArgs) -> Result<(), HarnessError> {
    let spec = match &a.config {
        Some(p) => ExperimentConfig::load(p)?
            .data
            .synthetic
            .ok_or_else(|| HarnessError::Config(format!("{}: no [data.synthetic] section", p.display())))?,
        None => {
            let mut s = if a.degenerate {
                SyntheticSpec::degenerate_control(a.classes, a.elevations, a.azimuths, a.feature_dim)
            } else {
                SyntheticSpec::two_key_views(a.classes, a.elevations, a.azimuths, a.feature_dim)
            };
            s.instances_per_class = a.per_class;
            s
        }
    };
    let ds = generate_synthetic(&spec, &mut Stream::new(a.seed, "data-gen"))?;
    save_dataset(&ds, &a.out)?;
    println!("wrote {} instances ({} classes) to {}", ds.len(), ds.meta.classes, a.out.display());
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<(), HarnessError> {
    let cfg = a.o.resolve()?;
    if !cfg.method.is_agent() {
        return Err(HarnessError::Config(format!("{} does not train an agent", cfg.method)));
    }
    let seed = cfg.seeds[0];
    let ds = load_data(&cfg, seed)?;
    let splits = make_splits(&ds, &cfg.data.fractions, seed)?;
    let tc = super::agent_train_config(cfg.method, &cfg.train_for(seed));
    let out = &cfg.output;
    let (last_path, best_path) = (out.join("last.ckpt"), out.join("best.ckpt"));
    let mut trainer = if a.resume {
        Trainer::resume(&splits.train, &splits.val, Checkpoint::load(&last_path)?, Checkpoint::load(&best_path)?)?
    } else {
        Trainer::new(&splits.train, &splits.val, tc)?
    };
    fs::create_dir_all(out).map_err(|e| HarnessError::Runtime(format!("{}: {e}", out.display())))?;
    let history_path = out.join("history.csv");
    let mut history = match a.resume {
        true if history_path.exists() => read_history(&history_path)?,
        _ => Vec::new(),
    };
    while !trainer.finished() {
        let rec = trainer.run_epoch()?.clone();
        eprintln!("epoch {:>3}  val_acc {:.4}  best {:.4}", rec.epoch, rec.val_acc, rec.best_val_acc);
        history.push(rec);
        trainer.last_checkpoint().save(&last_path)?;
        trainer.best_checkpoint().save(&best_path)?;
    }
    trainer.last_checkpoint().save(&last_path)?;
    trainer.best_checkpoint().save(&best_path)?;
    write_history(create(&history_path)?, &history).map_err(csv_err)?;
    fs::write(out.join("config.toml"), cfg.to_toml())?;
    let s = trainer.state();
    println!("best_val_acc={:.6} best_epoch={} epochs={}", s.best_val_acc, s.best_epoch, s.epoch);
    Ok(())
}

fn read_history(path: &Path) -> Result<Vec<crate::train::EpochRecord>, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| HarnessError::Data(e.to_string()))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| HarnessError::Data(e.to_string()))?;
        let f = |i: usize| -> Result<f64, HarnessError> {
            rec.get(i)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| HarnessError::Data(format!("{}: bad history row", path.display())))
        };
        out.push(crate::train::EpochRecord {
            epoch: f(0)? as usize,
            train_sm: f(1)?,
            train_rl: f(2)?,
            train_la: f(3)?,
            val_acc: f(4)?,
            seconds: f(5)?,
            val_la: f(6)?,
            best_val_acc: f(7)?,
        });
    }
    Ok(out)
}

fn select_split(ds: Dataset, split: SplitArg, seed: u64) -> Result<Dataset, HarnessError> {
    let fractions = super::DataConfig::default().fractions;
    Ok(match split {
        SplitArg::All => ds,
        SplitArg::Train => make_splits(&ds, &fractions, seed)?.train,
        SplitArg::Val => make_splits(&ds, &fractions, seed)?.val,
        SplitArg::Test => make_splits(&ds, &fractions, seed)?.test,
    })
}

fn eval_cmd(a: EvalArgs) -> Result<(), HarnessError> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let seed = a.seed.unwrap_or(ck.train.seed);
    let ds = select_split(load_vgd(&a.data)?, a.split, ck.train.seed)?;
    let mode = if a.average { EvalMode::AverageHeads } else { EvalMode::FinalHead };
    let name = agent_method_name(&ck.train, mode);
    let horizons = a.steps.unwrap_or_else(|| vec![ck.agent.steps]);
    let rows = horizons
        .iter()
        .map(|&t| {
            let acc = evaluate(&ck.params, &ck.agent, &ds, t, mode, &ck.train.eval_mode(), seed)?;
            Ok(ResultRow { method: name.clone(), steps: t, seed, accuracy: acc })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    write_rows(io::stdout().lock(), &rows)?;
    if let Some(p) = &a.out {
        write_rows(create(p)?, &rows)?;
    }
    Ok(())
}

fn run_cmd(cfg: ExperimentConfig) -> Result<(), HarnessError> {
    let out = run_experiment(&cfg)?;
    let dir = cfg.output.join(cfg.method.name());
    write_rows(create(&dir.join("results.csv"))?, &out.results)?;
    write_rows(create(&dir.join("steps.csv"))?, &out.steps)?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    write_table(io::stdout().lock(), &table(&out.results))
}

fn search_cmd(a: SearchArgs) -> Result<(), HarnessError> {
    let cfg = a.o.resolve()?;
    if a.budget == 0 {
        return Err(HarnessError::Config("search budget must be positive".into()));
    }
    let seed = cfg.seeds[0];
    let ds = load_data(&cfg, seed)?;
    let splits = make_splits(&ds, &cfg.data.fractions, seed)?;
    let base = super::agent_train_config(cfg.method, &cfg.train_for(seed));
    let res = hyperparam_search(&splits.train, &splits.val, &base, &SearchSpace::default(), a.budget, seed)?;
    write_ledger(create(&cfg.output.join("search.csv"))?, &res.ledger).map_err(csv_err)?;
    let best = ExperimentConfig { train: res.best, ..cfg.clone() };
    fs::write(cfg.output.join("best.toml"), best.to_toml())?;
    println!("best_val_acc={:.6}", res.best_val_acc);
    Ok(())
}

fn read_all<T: for<'de> serde::Deserialize<'de>>(inputs: &[PathBuf]) -> Result<Vec<T>, HarnessError> {
    let mut rows = Vec::new();
    for p in inputs {
        let f = File::open(p).map_err(|e| HarnessError::Data(format!("{}: {e}", p.display())))?;
        rows.extend(read_rows::<_, T>(f).map_err(|e| HarnessError::Data(format!("{}: {e}", p.display())))?);
    }
    Ok(rows)
}

fn table_cmd(a: TableArgs) -> Result<(), HarnessError> {
    let rows: Vec<ResultRow> = read_all(&a.inputs)?;
    let t = table(&rows);
    match &a.out {
        Some(p) => write_table(create(p)?, &t),
        None => write_table(io::stdout().lock(), &t),
    }
}

fn curves_cmd(a: TableArgs) -> Result<(), HarnessError> {
    let rows: Vec<StepRow> = read_all(&a.inputs)?;
    let c = curves(&rows)?;
    match &a.out {
        Some(p) => write_rows(create(p)?, &c),
        None => write_rows(io::stdout().lock(), &c),
    }
}

fn traces_cmd(a: TracesArgs) -> Result<(), HarnessError> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let seed = a.seed.unwrap_or(ck.train.seed);
    let ds = select_split(load_vgd(&a.data)?, a.split, ck.train.seed)?;
    ck.agent.check_dataset(&ds.meta)?;
    let mode = if a.sample { PolicyMode::Learned } else { ck.train.eval_mode() };
    let n = a.episodes.unwrap_or(ds.len());
    let eval = Stream::new(seed, "eval");
    let mut tape = Tape::new();
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let inst = &ds.instances[i % ds.len().max(1)];
        tape.reset();
        let r = rollout(&mut tape, inst, &ck.params, &ck.agent, &mut eval.fork(i as u64), &mode)?;
        records.push(TraceRecord::from_trajectory(i, &r.trajectory));
    }
    let mut w = create(&a.out)?;
    crate::agent::write_traces(&mut w, &records)?;
    w.flush()?;
    println!("wrote {n} episodes to {}", a.out.display());
    Ok(())
}

fn grad_check_cmd(a: GradCheckArgs) -> Result<(), HarnessError> {
    let results = run_suite(a.configs, a.tolerance, a.seed)?;
    let mut failed = 0;
    for r in &results {
        println!(
            "{:<4} {:<18} configs={} coords={} max_rel_err={:.3e}",
            if r.passed { "ok" } else { "FAIL" },
            r.case,
            r.configs,
            r.coordinates,
            r.max_rel_err
        );
        failed += usize::from(!r.passed);
    }
    if failed > 0 {
        return Err(HarnessError::Runtime(format!("{failed} gradient cases exceed tolerance {:e}", a.tolerance)));
    }
    Ok(())
}
