//! Command-line front end: data ingestion, experiment dispatch, CSV metrics
//! output, and snapshot handling.
//!
//! Exit codes: 0 success, 2 usage or validation failure, 3 missing file,
//! 4 malformed CSV.

mod config;
mod ingest;
mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use wiski::kernels::KernelFamily;
use wiski::loops::active::AlConfig;
use wiski::loops::bayesopt::BoConfig;
use wiski::loops::data::{banana_classification, linear_stream, sine_stream};
use wiski::loops::{
    active_learning_run, bayes_opt_loop, bench_timing, stream_classification, stream_regression,
    AlStrategy, BenchMeasure, ExactRegressor, MetricsRow, ModelKind, ObjectiveKind, StreamConfig,
    SurrogateKind, TestObjective, WiskiRegressor,
};
use wiski::model::WiskiState;

use config::FileConfig;

/// Errors with documented process exit codes.
#[derive(Debug)]
pub struct CliError {
    message: String,
    code: i32,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { message: message.into(), code: 2 }
    }

    pub fn code(&self) -> i32 {
        self.code
    }

    pub fn missing_file(path: &std::path::Path, err: std::io::Error) -> Self {
        CliError {
            message: format!("cannot open {}: {err}", path.display()),
            code: 3,
        }
    }

    pub fn malformed_csv(message: String) -> Self {
        CliError { message: format!("malformed CSV: {message}"), code: 4 }
    }
}

impl From<wiski::Error> for CliError {
    fn from(e: wiski::Error) -> Self {
        let code = match &e {
            wiski::Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => 3,
            wiski::Error::InvalidArgument(_) => 2,
            _ => 1,
        };
        CliError { message: e.to_string(), code }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        let code = if e.kind() == std::io::ErrorKind::NotFound { 3 } else { 1 };
        CliError { message: e.to_string(), code }
    }
}

#[derive(Parser)]
#[command(
    name = "wiski",
    about = "Streaming Gaussian-process experiments with constant-time online updates",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// RNG seed (mandatory for every experiment subcommand).
    #[arg(long)]
    seed: u64,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat key=value configuration file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Kernel family: rbf or matern12.
    #[arg(long)]
    kernel: Option<String>,
    /// Grid nodes per input dimension.
    #[arg(long = "grid-size")]
    grid_size: Option<usize>,
    /// Root rank (defaults to the full grid size).
    #[arg(long)]
    rank: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Online regression on a CSV file or a synthetic stream.
    StreamRegress {
        #[command(flatten)]
        common: CommonOpts,
        /// CSV dataset path (requires --target).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Target column (header name or zero-based index).
        #[arg(long)]
        target: Option<String>,
        /// Synthetic stream: sine or linear.
        #[arg(long)]
        synthetic: Option<String>,
        /// Number of synthetic observations.
        #[arg(long)]
        n: Option<usize>,
        /// Synthetic observation noise standard deviation.
        #[arg(long = "noise-sd")]
        noise_sd: Option<f64>,
        /// Disable target standardization for CSV input.
        #[arg(long = "no-standardize")]
        no_standardize: bool,
        /// Model arm: wiski or exact.
        #[arg(long, default_value = "wiski")]
        model: String,
        #[arg(long = "pretrain-epochs")]
        pretrain_epochs: Option<usize>,
        #[arg(long = "steps-per-obs")]
        steps_per_obs: Option<usize>,
        #[arg(long = "hyper-every")]
        hyper_every: Option<usize>,
        #[arg(long = "lr-batch")]
        lr_batch: Option<f64>,
        #[arg(long = "lr-online")]
        lr_online: Option<f64>,
        /// Save the final model state (wiski arm only).
        #[arg(long = "snapshot-out")]
        snapshot_out: Option<PathBuf>,
        /// Run this many independent trials with seeds seed, seed+1, ...;
        /// trials run on worker threads (capped by WISKI_THREADS), each writes
        /// its own file, and the merged output gains a leading seed column.
        #[arg(long, default_value_t = 1)]
        trials: usize,
    },
    /// Online Dirichlet classification on synthetic banana-shaped data.
    StreamClassify {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, default_value = "banana")]
        synthetic: String,
        #[arg(long, default_value_t = 400)]
        n: usize,
        #[arg(long, default_value = "wiski")]
        model: String,
        #[arg(long = "pretrain-epochs")]
        pretrain_epochs: Option<usize>,
        #[arg(long = "steps-per-obs")]
        steps_per_obs: Option<usize>,
        #[arg(long = "hyper-every")]
        hyper_every: Option<usize>,
        #[arg(long = "lr-batch")]
        lr_batch: Option<f64>,
        #[arg(long = "lr-online")]
        lr_online: Option<f64>,
    },
    /// Upper-confidence-bound Bayesian optimization of a synthetic objective.
    BayesOpt {
        #[command(flatten)]
        common: CommonOpts,
        /// Objective: levy3, ackley3, sine1d, or synthetic2dfield.
        #[arg(long, default_value = "levy3")]
        objective: String,
        /// Surrogate: wiski or exact.
        #[arg(long, default_value = "wiski")]
        surrogate: String,
        #[arg(long)]
        iterations: Option<usize>,
        /// Acquisition batch size.
        #[arg(long)]
        q: Option<usize>,
        #[arg(long)]
        pool: Option<usize>,
        #[arg(long = "beta-ucb")]
        beta_ucb: Option<f64>,
        #[arg(long = "noise-sd")]
        noise_sd: Option<f64>,
    },
    /// Active learning on a sampled 2-D field by integrated-variance search.
    ActiveLearn {
        #[command(flatten)]
        common: CommonOpts,
        /// Strategy: nipv or random.
        #[arg(long, default_value = "nipv")]
        strategy: String,
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long)]
        q: Option<usize>,
        #[arg(long = "pool-size", default_value_t = 400)]
        pool_size: usize,
        #[arg(long = "test-size", default_value_t = 256)]
        test_size: usize,
        #[arg(long = "noise-sd")]
        noise_sd: Option<f64>,
    },
    /// Per-step wall-clock timing of the online update.
    BenchTiming {
        #[command(flatten)]
        common: CommonOpts,
        /// Stream length.
        #[arg(long)]
        n: Option<usize>,
        /// Total inducing grid size m (nodes per dimension = sqrt(m), d = 2).
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, default_value = "wiski")]
        model: String,
        /// Measure full updates only in windows at these stream sizes.
        #[arg(long = "measure-at", value_delimiter = ',')]
        measure_at: Option<Vec<usize>>,
        /// Measured steps per window.
        #[arg(long, default_value_t = 5)]
        reps: usize,
    },
    /// Inspect a saved model snapshot (optionally re-writing it).
    Snapshot {
        /// Snapshot file to read.
        file: PathBuf,
        /// Re-save the state to this path after loading.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            if e.code == 2 {
                eprintln!("run `wiski --help` or `wiski <subcommand> --help` for usage");
            }
            std::process::exit(e.code);
        }
    }
}

fn parse_kernel(c: &FileConfig, flag: Option<String>) -> Result<KernelFamily, CliError> {
    let name = c.resolve(flag, "kernel", "rbf".to_string())?;
    KernelFamily::parse(&name).map_err(CliError::from)
}

/// Fan independent trials out to worker threads, capped by `WISKI_THREADS`
/// (default: available parallelism). Each trial owns its own state.
fn run_trials<R: Send>(
    seeds: &[u64],
    run_one: &(dyn Fn(u64) -> Result<R, CliError> + Sync),
) -> Result<Vec<R>, CliError> {
    let cap = std::env::var("WISKI_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism().map(|p| p.get()).unwrap_or(1)
        });
    let mut results: Vec<Option<Result<R, CliError>>> = Vec::new();
    results.resize_with(seeds.len(), || None);
    for chunk_start in (0..seeds.len()).step_by(cap) {
        let chunk_end = (chunk_start + cap).min(seeds.len());
        let chunk = &seeds[chunk_start..chunk_end];
        let mut chunk_results: Vec<Option<Result<R, CliError>>> = Vec::new();
        chunk_results.resize_with(chunk.len(), || None);
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for &seed in chunk {
                handles.push(scope.spawn(move || run_one(seed)));
            }
            for (slot, handle) in chunk_results.iter_mut().zip(handles) {
                *slot = Some(handle.join().expect("trial thread panicked"));
            }
        });
        for (i, r) in chunk_results.into_iter().enumerate() {
            results[chunk_start + i] = r;
        }
    }
    results
        .into_iter()
        .map(|r| r.expect("all trials executed"))
        .collect()
}

fn stream_cfg(
    common: &CommonOpts,
    file: &FileConfig,
    pretrain_epochs: Option<usize>,
    steps_per_obs: Option<usize>,
    hyper_every: Option<usize>,
    lr_batch: Option<f64>,
    lr_online: Option<f64>,
    default_grid: usize,
) -> Result<StreamConfig<f64>, CliError> {
    Ok(StreamConfig {
        pretrain_fraction: 0.05,
        pretrain_epochs: file.resolve(pretrain_epochs, "pretrain_epochs", 200)?,
        steps_per_observation: file.resolve(steps_per_obs, "steps_per_obs", 1)?,
        hyper_every: file.resolve(hyper_every, "hyper_every", 1)?,
        lr_batch: file.resolve(lr_batch, "lr_batch", 5e-2)?,
        lr_online: file.resolve(lr_online, "lr_online", 5e-3)?,
        grid_size_per_dim: file.resolve(common.grid_size, "grid_size", default_grid)?,
        kernel: parse_kernel(file, common.kernel.clone())?,
        rank: file.resolve_opt(common.rank, "rank")?,
        seed: common.seed,
        eval_test: true,
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::StreamRegress {
            common,
            data,
            target,
            synthetic,
            n,
            noise_sd,
            no_standardize,
            model,
            pretrain_epochs,
            steps_per_obs,
            hyper_every,
            lr_batch,
            lr_online,
            snapshot_out,
            trials,
        } => {
            let file = FileConfig::load(common.config.as_deref())?;
            let kind = ModelKind::parse(&model)?;
            let n = file.resolve(n, "n", 1000)?;
            let noise_sd = file.resolve(noise_sd, "noise_sd", 0.2)?;
            if trials == 0 {
                return Err(CliError::usage("--trials must be at least 1"));
            }
            if matches!((&data, &synthetic), (None, None)) {
                return Err(CliError::usage("either --data or --synthetic is required"));
            }
            if data.is_some() && synthetic.is_some() {
                return Err(CliError::usage("--data and --synthetic are mutually exclusive"));
            }
            if kind == ModelKind::Exact && snapshot_out.is_some() {
                return Err(CliError::usage("--snapshot-out applies to the wiski model"));
            }

            let run_one = |seed: u64| -> Result<Vec<MetricsRow<f64>>, CliError> {
                let dataset = match (&data, &synthetic) {
                    (Some(path), _) => {
                        let target = target.as_deref().ok_or_else(|| {
                            CliError::usage("--target is required with --data")
                        })?;
                        ingest::ingest_csv(path, target, !no_standardize, seed)?
                    }
                    (_, Some(name)) => match name.as_str() {
                        "sine" => sine_stream(n, noise_sd, seed)?,
                        "linear" => linear_stream(n, noise_sd, seed)?,
                        other => {
                            return Err(CliError::usage(format!(
                                "unknown synthetic stream '{other}' (sine, linear)"
                            )))
                        }
                    },
                    (None, None) => unreachable!("validated above"),
                };
                let default_grid = if dataset.dims() == 1 { 256 } else { 16 };
                let mut cfg = stream_cfg(
                    &common, &file, pretrain_epochs, steps_per_obs, hyper_every, lr_batch,
                    lr_online, default_grid,
                )?;
                cfg.seed = seed;
                match kind {
                    ModelKind::Wiski => {
                        let mut m = WiskiRegressor::new(&dataset, &cfg)?;
                        let rows = stream_regression(&mut m, &dataset, &cfg)?;
                        if let Some(path) = &snapshot_out {
                            m.state.save_snapshot(path)?;
                        }
                        Ok(rows)
                    }
                    ModelKind::Exact => {
                        let mut m = ExactRegressor::new(&dataset, &cfg)?;
                        Ok(stream_regression(&mut m, &dataset, &cfg)?)
                    }
                }
            };

            if trials == 1 {
                let rows = run_one(common.seed)?;
                output::write_metrics(common.out.as_deref(), &rows, "rmse")?;
            } else {
                let seeds: Vec<u64> = (0..trials as u64).map(|k| common.seed + k).collect();
                let per_seed = run_trials(&seeds, &run_one)?;
                for (seed, rows) in seeds.iter().zip(per_seed.iter()) {
                    if let Some(path) = output::per_seed_path(common.out.as_deref(), *seed) {
                        output::write_metrics(Some(&path), rows, "rmse")?;
                    }
                }
                output::write_merged_metrics(common.out.as_deref(), &seeds, &per_seed, "rmse")?;
            }
        }

        Command::StreamClassify {
            common,
            synthetic,
            n,
            model,
            pretrain_epochs,
            steps_per_obs,
            hyper_every,
            lr_batch,
            lr_online,
        } => {
            let file = FileConfig::load(common.config.as_deref())?;
            if synthetic != "banana" {
                return Err(CliError::usage(format!(
                    "unknown synthetic classification set '{synthetic}' (banana)"
                )));
            }
            let kind = ModelKind::parse(&model)?;
            let dataset = banana_classification::<f64>(n, common.seed)?;
            let cfg = stream_cfg(
                &common, &file, pretrain_epochs, steps_per_obs, hyper_every, lr_batch, lr_online,
                16,
            )?;
            let rows = stream_classification(kind, &dataset, &cfg)?;
            output::write_metrics(common.out.as_deref(), &rows, "accuracy")?;
        }

        Command::BayesOpt {
            common,
            objective,
            surrogate,
            iterations,
            q,
            pool,
            beta_ucb,
            noise_sd,
        } => {
            let file = FileConfig::load(common.config.as_deref())?;
            let kind = ObjectiveKind::parse(&objective)
                .ok_or_else(|| CliError::usage(format!("unknown objective '{objective}'")))?;
            let surrogate = match surrogate.as_str() {
                "wiski" => SurrogateKind::Wiski,
                "exact" => SurrogateKind::Exact,
                other => return Err(CliError::usage(format!("unknown surrogate '{other}'"))),
            };
            let default_noise = match kind {
                ObjectiveKind::Levy3 => 10.0,
                ObjectiveKind::Ackley3 => 4.0,
                _ => 0.1,
            };
            let obj = TestObjective::new(kind, file.resolve(noise_sd, "noise_sd", default_noise)?);
            let cfg = BoConfig {
                iterations: file.resolve(iterations, "iterations", 200)?,
                batch_size: file.resolve(q, "q", 3)?,
                pool_size: file.resolve(pool, "pool", 512)?,
                beta_ucb: file.resolve(beta_ucb, "beta_ucb", 2.0)?,
                grid_size_per_dim: file.resolve(common.grid_size, "grid_size", 8)?,
                rank: file.resolve_opt(common.rank, "rank")?,
                seed: common.seed,
                ..BoConfig::default()
            };
            let trace = bayes_opt_loop(&obj, surrogate, &cfg)?;
            output::write_bo_trace(common.out.as_deref(), &trace)?;
        }

        Command::ActiveLearn {
            common,
            strategy,
            rounds,
            q,
            pool_size,
            test_size,
            noise_sd,
        } => {
            let file = FileConfig::load(common.config.as_deref())?;
            let strategy = AlStrategy::parse(&strategy)?;
            let noise_sd = file.resolve(noise_sd, "noise_sd", 0.1)?;
            let field = wiski::loops::data::matern_field_2d::<f64>(
                pool_size,
                test_size,
                0.5,
                noise_sd,
                common.seed,
            )?;
            let cfg = AlConfig {
                rounds: file.resolve(rounds, "rounds", 20)?,
                batch_size: file.resolve(q, "q", 6)?,
                grid_size_per_dim: file.resolve(common.grid_size, "grid_size", 30)?,
                seed: common.seed,
                ..AlConfig::default()
            };
            let trace = active_learning_run(&field, strategy, &cfg)?;
            output::write_al_trace(common.out.as_deref(), &trace)?;
        }

        Command::BenchTiming { common, n, m, model, measure_at, reps } => {
            let file = FileConfig::load(common.config.as_deref())?;
            let kind = ModelKind::parse(&model)?;
            let n = file.resolve(n, "n", 2000)?;
            let m_total = file.resolve(m, "grid_size", 256)?;
            let per_dim = (m_total as f64).sqrt().round() as usize;
            if per_dim * per_dim != m_total {
                return Err(CliError::usage(format!(
                    "--m {m_total} is not a perfect square (the benchmark grid is 2-D)"
                )));
            }
            let cfg = StreamConfig {
                grid_size_per_dim: per_dim,
                rank: file.resolve_opt(common.rank, "rank")?,
                kernel: parse_kernel(&file, common.kernel.clone())?,
                seed: common.seed,
                pretrain_epochs: 20,
                ..StreamConfig::default()
            };
            let measure = match measure_at {
                Some(at) => BenchMeasure::Windows { at, reps },
                None => BenchMeasure::EveryStep,
            };
            let rows = bench_timing::<f64>(kind, n, &cfg, &measure)?;
            output::write_bench(common.out.as_deref(), &rows)?;
        }

        Command::Snapshot { file, out } => {
            let state = WiskiState::<f64>::load_snapshot(&file).map_err(|e| match e {
                wiski::Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => {
                    CliError::missing_file(&file, io)
                }
                other => CliError::from(other),
            })?;
            let params = state.params();
            println!("snapshot: {}", file.display());
            println!("  observations: {}", state.n());
            println!(
                "  grid: {:?} nodes over {} dims (m = {})",
                state.grid().sizes(),
                state.grid().dims(),
                state.grid().num_nodes()
            );
            println!("  root rank: {}", state.root().rank());
            println!(
                "  lengthscales: {:?}",
                params.log_lengthscales.iter().map(|v| v.exp()).collect::<Vec<_>>()
            );
            println!("  outputscale: {}", params.outputscale());
            println!("  noise variance: {}", params.noise_variance());
            if let Some(path) = out {
                state.save_snapshot(&path)?;
                println!("  re-saved to {}", path.display());
            }
        }
    }
    Ok(())
}
