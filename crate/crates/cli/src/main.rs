//! Command-line front end: simulate, benchmark, fit and predict.

mod config;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use sgtree::eval::{fit_learner, fmt_f64, learner_by_name, run_benchmark, NamedLearner, TuneGrid};
use sgtree::simlab::{
    run_simulation_grid_with, DgpKind, RowWriter, SimulationPlan, SimulationResult,
    DEFAULT_VARIANTS,
};
use sgtree::tabular::{load_csv, read_feature_csv, HoldoutPlan};
use sgtree::{Model, Regressor};

const DEFAULT_BENCHMARK_MODELS: &str = "lasso,cart,rf,sgt,bt,booging";

#[derive(Parser, Debug)]
#[command(
    name = "sgtree",
    version,
    about = "Slow-growing trees and tree-ensemble benchmarks"
)]
struct Cli {
    /// Flat `key = value` file; keys are flag names, flags given on the
    /// command line win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the synthetic simulation grid.
    Simulate(SimulateArgs),
    /// Holdout benchmark of several learners on one dataset.
    Benchmark(BenchmarkArgs),
    /// Fit one learner on a CSV and save it as JSON.
    Fit(FitArgs),
    /// Predict a CSV with a saved model.
    Predict(PredictArgs),
}

#[derive(Args, Debug)]
struct GridArgs {
    /// Cross-validation folds used for tuning.
    #[arg(long, default_value_t = 5)]
    k_folds: usize,
}

impl GridArgs {
    fn grid(&self) -> TuneGrid {
        TuneGrid {
            k_folds: self.k_folds,
            ..TuneGrid::default()
        }
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Plan file in the same `key = value` format as --config.
    #[arg(long, value_name = "FILE")]
    plan: Option<PathBuf>,
    /// Comma-separated DGPs: tree, friedman1, friedman2, friedman3, linear.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "tree,friedman1,friedman2,friedman3,linear"
    )]
    dgps: Vec<DgpKind>,
    /// Comma-separated true R² levels in (0, 1).
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,0.95,0.99"
    )]
    true_r2: Vec<f64>,
    /// Comma-separated model variants.
    #[arg(long, default_value_t = DEFAULT_VARIANTS.join(","))]
    models: String,
    #[arg(long, default_value_t = 10)]
    n_features: usize,
    #[arg(long, default_value_t = 100)]
    n_train: usize,
    #[arg(long, default_value_t = 100)]
    n_test: usize,
    #[arg(long, default_value_t = 30)]
    replications: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fill the runtime column (results are then no longer reproducible byte for byte).
    #[arg(long)]
    record_runtime: bool,
    /// Per-run results CSV, written as cells finish.
    #[arg(long, default_value = "simulation.csv")]
    out: PathBuf,
    /// Mean oracle R² per (DGP, true R², model).
    #[arg(long, default_value = "simulation_summary.csv")]
    summary_out: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args, Debug)]
struct BenchmarkArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    target: String,
    /// Keep row order: train on the first rows, test on the last ones, and
    /// compare models with Diebold-Mariano tests.
    #[arg(long)]
    temporal: bool,
    #[arg(long, default_value = DEFAULT_BENCHMARK_MODELS)]
    models: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.7)]
    train_fraction: f64,
    /// Report CSV; the table always goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Learner name, e.g. rf, cart, sgt, sgt_0.1_0.25, bt_0.1_1500, booging, lasso.
    #[arg(long)]
    model: String,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    target: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args, Debug)]
struct PredictArgs {
    /// Model JSON written by `fit`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn parse_models(list: &str) -> Result<Vec<NamedLearner>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|name| learner_by_name(name).map_err(Into::into))
        .collect()
}

fn create(path: &PathBuf) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let plan = SimulationPlan {
        dgps: a.dgps,
        true_r2_grid: a.true_r2,
        n_features: a.n_features,
        n_train: a.n_train,
        n_test: a.n_test,
        n_replications: a.replications,
        model_variants: parse_models(&a.models)?,
        grid: a.grid.grid(),
        seed: a.seed,
        record_runtime: a.record_runtime,
    };
    plan.validate()?;
    log::info!("simulation: {} runs", plan.n_rows());
    let mut writer = RowWriter::new(create(&a.out)?)?;
    let mut rows = Vec::with_capacity(plan.n_rows());
    run_simulation_grid_with(&plan, |r| {
        writer.write(r)?;
        rows.push(r.clone());
        Ok(())
    })?;
    writer.finish()?;
    let result = SimulationResult { rows };
    let summary = result.summarize();
    SimulationResult::write_summary_csv(&summary, create(&a.summary_out)?)?;
    print!("{}", SimulationResult::summary_table(&summary));
    let failed = result.rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        eprintln!(
            "{failed} run(s) failed; see the error column of {}",
            a.out.display()
        );
    }
    Ok(())
}

fn benchmark(a: BenchmarkArgs) -> Result<()> {
    let data = load_csv(&a.data, &a.target)?;
    let split = if a.temporal {
        HoldoutPlan::temporal(a.train_fraction)
    } else {
        HoldoutPlan::random(a.train_fraction, a.seed)
    };
    let split = HoldoutPlan {
        seed: a.seed,
        ..split
    };
    let report = run_benchmark(&data, &split, &parse_models(&a.models)?, &a.grid.grid())?;
    if let Some(out) = &a.out {
        report.write_csv(create(out)?)?;
    }
    print!("{}", report.to_table());
    Ok(())
}

fn fit(a: FitArgs) -> Result<()> {
    let data = load_csv(&a.data, &a.target)?;
    let learner = learner_by_name(&a.model)?;
    let (model, tuned) = fit_learner(&data, &learner.learner, &a.grid.grid(), a.seed)?;
    let chosen = tuned.describe();
    if !chosen.is_empty() {
        eprintln!("{}: selected {chosen}", a.model);
    }
    model.save(&a.out, Some(data.feature_names()))?;
    Ok(())
}

fn predict(a: PredictArgs) -> Result<()> {
    let (model, names) = Model::load(&a.model)?;
    let (_, x) = read_feature_csv(&a.data, names.as_deref())?;
    if x.n_cols() != model.n_features() {
        bail!(
            "{} has {} columns but the model expects {} features",
            a.data.display(),
            x.n_cols(),
            model.n_features()
        );
    }
    let pred = model.predict(&x)?;
    let mut w = create(&a.out)?;
    writeln!(w, "prediction")?;
    for p in pred {
        writeln!(w, "{}", fmt_f64(p))?;
    }
    w.flush()?;
    Ok(())
}

fn run() -> Result<()> {
    let argv: Vec<String> = std::env::args().collect();
    let mut cmd = Cli::command();
    let names: Vec<String> = cmd
        .get_subcommands()
        .map(|c| c.get_name().to_string())
        .collect();
    for name in &names {
        // Values from config files come first; repeated flags keep the last value.
        cmd = cmd.mut_subcommand(name, |c| c.args_override_self(true));
    }
    let argv = config::merge_config(&cmd, argv)?;
    let cli = match Cli::from_arg_matches(&cmd.get_matches_from(argv)) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Benchmark(a) => benchmark(a),
        Command::Fit(a) => fit(a),
        Command::Predict(a) => predict(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e)
            if e.downcast_ref::<io::Error>()
                .is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe) =>
        {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
