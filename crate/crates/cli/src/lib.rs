//! Command-line driver: config-driven training, comparison, tuning,
//! importance, forecasting and synthetic data generation.

pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use lstm_rf::synth::SynthParams;
use lstm_rf::Execution;

pub use config::RunConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "lstm-rf", version, about = "Hybrid LSTM and random-forest time-series forecasting")]
pub struct Cli {
    /// Cap on worker threads (also read from LSTMRF_THREADS).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Run every stage on the calling thread.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long, short)]
    pub config: PathBuf,
    /// Override a config key, e.g. `--set lstm.epochs=50`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the hybrid and write the model, report and predictions.
    Train(ConfigArgs),
    /// Forecast past the end of a series with a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "date")]
        date_column: String,
        #[arg(long, default_value_t = 1)]
        horizon: usize,
        #[arg(long, default_value = "forecast.csv")]
        output: PathBuf,
    },
    /// Compare LSTM-only, RF-only and the hybrid on the same split.
    Compare(ConfigArgs),
    /// Grid-search LSTM then forest hyperparameters.
    Tune(ConfigArgs),
    /// Rank exogenous columns by forest importance.
    Importance(ConfigArgs),
    /// Write a synthetic dataset.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value = "synthetic.csv")]
    pub output: PathBuf,
    #[arg(long)]
    pub length: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub period: Option<f64>,
    #[arg(long)]
    pub season_amplitude: Option<f64>,
    #[arg(long)]
    pub pressure_coupling: Option<f64>,
    #[arg(long)]
    pub nitrite_coupling: Option<f64>,
    /// Start from the fixture where pressure alone drives the target.
    #[arg(long)]
    pub planted_driver: bool,
}

impl SynthArgs {
    pub fn params(&self) -> SynthParams {
        let mut p = if self.planted_driver {
            SynthParams::planted_driver()
        } else {
            SynthParams::default()
        };
        p.length = self.length.unwrap_or(p.length);
        p.seed = self.seed.unwrap_or(p.seed);
        p.noise = self.noise.unwrap_or(p.noise);
        p.period = self.period.unwrap_or(p.period);
        p.season_amplitude = self.season_amplitude.unwrap_or(p.season_amplitude);
        p.pressure_coupling = self.pressure_coupling.unwrap_or(p.pressure_coupling);
        p.nitrite_coupling = self.nitrite_coupling.unwrap_or(p.nitrite_coupling);
        p
    }
}

/// Environment lookups, injectable for tests.
pub trait Env: Sync {
    fn get(&self, key: &str) -> Option<String>;
}

pub struct ProcessEnv;

impl Env for ProcessEnv {
    fn get(&self, key: &str) -> Option<String> {
        std::env::var(key).ok()
    }
}

fn load_config(args: &ConfigArgs, env: &dyn Env) -> Result<RunConfig, CliError> {
    RunConfig::load(&args.config, env.get(config::SEED_ENV).as_deref(), &args.overrides)
}

fn thread_cap(cli: &Cli, env: &dyn Env) -> Result<Option<usize>, CliError> {
    let raw = match (cli.threads, env.get(config::THREADS_ENV)) {
        (Some(n), _) => Some(n),
        (None, Some(s)) => Some(s.trim().parse().map_err(|_| {
            CliError::Config(format!("{} must be a positive integer, got `{s}`", config::THREADS_ENV))
        })?),
        (None, None) => None,
    };
    if raw == Some(0) {
        return Err(CliError::Config("thread count must be at least 1".into()));
    }
    Ok(raw)
}

fn dispatch(cli: &Cli, env: &dyn Env) -> Result<commands::Outputs, CliError> {
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match &cli.command {
        Command::Train(a) => commands::train(&load_config(a, env)?, exec),
        Command::Compare(a) => commands::compare(&load_config(a, env)?, exec),
        Command::Tune(a) => commands::tune(&load_config(a, env)?, exec),
        Command::Importance(a) => commands::importance(&load_config(a, env)?, exec),
        Command::Predict {
            model,
            input,
            date_column,
            horizon,
            output,
        } => commands::predict(model, input, date_column, *horizon, output),
        Command::Synth(a) => commands::synth(&a.params(), &a.output),
    }
}

/// Run a parsed command, inside a bounded thread pool when requested.
pub fn execute(cli: &Cli, env: &dyn Env) -> Result<commands::Outputs, CliError> {
    let cap = thread_cap(cli, env)?;
    #[cfg(feature = "parallel")]
    if let Some(n) = cap {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(format!("cannot start {n} worker threads: {e}")))?;
        return pool.install(|| dispatch(cli, env));
    }
    let _ = cap;
    dispatch(cli, env)
}

/// Parse `args`, run, and map the outcome to a process exit code. Errors
/// print as one `error[category]: detail` line on stderr.
pub fn run<I, T>(args: I, env: &dyn Env) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("bad arguments").trim_start_matches("error: ");
            eprintln!("error[{}]: {first}", lstm_rf::ErrorCategory::Validation.as_str());
            return error::exit_code(lstm_rf::ErrorCategory::Validation);
        }
    };
    match execute(&cli, env) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category().as_str());
            e.exit_code()
        }
    }
}
