use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};
use patchreg_cli::commands::{cmd_bench, cmd_eval, cmd_gen, cmd_register, SampleFilter};
use patchreg_cli::config::CONFIG_ENV;
use patchreg_cli::{CliResult, ExperimentConfig, IcpInit, MethodEntry, MethodKind, Outcome};

#[derive(Parser)]
#[command(name = "patchreg", version, about = "Complete-to-partial registration experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Global seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (overrides the config).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory for results and reports (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Suite directory (overrides the config).
    #[arg(long, global = true)]
    suite: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the benchmark suite.
    Gen {
        /// Write the suite index only.
        #[arg(long)]
        dry_run: bool,
    },
    /// Register suite samples with one or all configured methods.
    Register {
        /// Method name from the config; all methods when omitted.
        #[arg(long)]
        method: Option<String>,
        /// Sample id; repeatable.
        #[arg(long, conflicts_with = "all")]
        sample: Vec<String>,
        /// Every sample in the suite (the default).
        #[arg(long)]
        all: bool,
        /// Override the start of ICP methods.
        #[arg(long, value_enum)]
        init: Option<IcpInit>,
    },
    /// Aggregate results into reports.
    Eval,
    /// gen + register + eval.
    Bench,
}

fn load(common: &Common) -> CliResult<ExperimentConfig> {
    let mut config = ExperimentConfig::load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        config.generation.seed = seed;
    }
    if let Some(w) = common.workers {
        config.workers = Some(w);
    }
    if let Some(out) = &common.out {
        config.output = out.clone();
    }
    if let Some(suite) = &common.suite {
        config.suite = suite.clone();
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> CliResult<Outcome> {
    let mut config = load(&cli.common)?;
    match cli.command {
        Command::Gen { dry_run } => {
            let index = cmd_gen(&config, dry_run)?;
            info!("wrote {} samples to {}", index.samples.len(), config.suite.display());
            Ok(Outcome::Success)
        }
        Command::Register {
            method,
            sample,
            all: _,
            init,
        } => {
            if let Some(init) = init {
                for m in &mut config.methods {
                    if let MethodKind::Icp { init: i, .. } = &mut m.kind {
                        *i = init;
                    }
                }
            }
            let methods: Vec<&MethodEntry> = match &method {
                Some(name) => vec![config.method(name)?],
                None => config.methods.iter().collect(),
            };
            let filter = if sample.is_empty() {
                SampleFilter::All
            } else {
                SampleFilter::Ids(sample)
            };
            let s = cmd_register(&config, &methods, &filter)?;
            info!("{} results, {} failed", s.results, s.failures);
            Ok(Outcome::from_failures(s.failures))
        }
        Command::Eval => {
            let s = cmd_eval(&config)?;
            for m in &s.methods {
                println!(
                    "{:<16} n={:<4} failed={:<3} mean RMS-TRE={}",
                    m.method,
                    m.samples,
                    m.failed,
                    m.mean_rms_tre.map_or("-".into(), |v| format!("{v:.3} mm"))
                );
            }
            Ok(Outcome::Success)
        }
        Command::Bench => {
            let s = cmd_bench(&config)?;
            for m in &s.eval.methods {
                println!(
                    "{:<16} n={:<4} failed={:<3} mean RMS-TRE={}",
                    m.method,
                    m.samples,
                    m.failed,
                    m.mean_rms_tre.map_or("-".into(), |v| format!("{v:.3} mm"))
                );
            }
            Ok(Outcome::from_failures(s.register.failures))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let outcome = match run(Cli::parse()) {
        Ok(o) => o,
        Err(e) => {
            error!("{e}");
            Outcome::Fatal
        }
    };
    ExitCode::from(outcome.code())
}
