mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{Context, ReportOptions};
use config::LoadedConfig;
use error::{CliError, CliResult, EXIT_USAGE};

/// Entropy-corrected discrete choice experiments: encode raw records, train,
/// report, generate synthetic records and impute missing values.
#[derive(Parser, Debug)]
#[command(name = "infochoice", version)]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, short, global = true, default_value = "infochoice.toml")]
    config: PathBuf,

    /// Overrides `data.output_dir`.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Record wall-clock times in output files (makes them non-reproducible).
    #[arg(long, global = true)]
    timing: bool,

    #[command(subcommand)]
    command: Command,
}

/// Comma-separated latent sizes parsed as one argument.
#[derive(Debug, Clone)]
struct Sizes(Vec<usize>);

fn parse_sizes(text: &str) -> Result<Sizes, String> {
    output::parse_sizes(text).map(Sizes)
}

#[derive(Args, Debug, Default)]
struct TrainOverrides {
    #[arg(long)]
    latent_count: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    gibbs_steps: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    mle_inner_steps: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split, fit the encoding schema and write the encoded datasets.
    Encode,
    /// Train a model and write the best checkpoint and history.
    Train {
        /// Continue from the saved trainer state.
        #[arg(long)]
        resume: bool,
        #[command(flatten)]
        overrides: TrainOverrides,
    },
    /// Mode shares, maxent, activation and probability reports.
    Report {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Encoded dataset to report on (defaults to the validation split).
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Also train one model per latent size, e.g. `0,5,20,35,50`.
        #[arg(long, value_parser = parse_sizes)]
        sensitivity: Option<Sizes>,
        /// Also generate synthetic data and score it against the training data.
        #[arg(long)]
        fit: bool,
        #[command(flatten)]
        overrides: TrainOverrides,
    },
    /// Draw synthetic records from a checkpoint.
    Generate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write histogram comparisons against the training data.
        #[arg(long)]
        fit: bool,
    },
    /// Fill target variables of partial records.
    Impute {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// CSV of partial records.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Comma-separated target variables.
        #[arg(long, value_delimiter = ',')]
        targets: Vec<String>,
        #[arg(long)]
        draws: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train one model per latent size and tabulate maxent and coefficients.
    Sensitivity {
        /// Latent sizes (defaults to `report.sensitivity_sizes`).
        #[arg(long, value_parser = parse_sizes)]
        sizes: Option<Sizes>,
        #[command(flatten)]
        overrides: TrainOverrides,
    },
}

fn apply_overrides(cfg: &mut LoadedConfig, o: &TrainOverrides) {
    let t = &mut cfg.config.train;
    if let Some(v) = o.latent_count {
        t.latent_count = v;
    }
    if let Some(v) = o.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = o.gibbs_steps {
        t.gibbs_steps = v;
    }
    if let Some(v) = o.learning_rate {
        t.learning_rate = v;
    }
    if let Some(v) = o.max_epochs {
        t.max_epochs = v;
    }
    if let Some(v) = o.seed {
        t.seed = v;
    }
    if let Some(v) = o.patience {
        t.early_stop_patience = v;
    }
    if let Some(v) = o.mle_inner_steps {
        t.mle_inner_steps = v;
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot configure the thread pool: {e}")))?;
    }
    let mut cfg = LoadedConfig::load(&cli.config)?;
    if let Some(dir) = cli.output_dir {
        cfg.config.data.output_dir = dir;
    }
    match &cli.command {
        Command::Train { overrides, .. } | Command::Report { overrides, .. } | Command::Sensitivity { overrides, .. } => {
            apply_overrides(&mut cfg, overrides)
        }
        Command::Generate { count, seed, .. } => {
            if let Some(c) = count {
                cfg.config.generate.count = *c;
            }
            if let Some(s) = seed {
                cfg.config.generate.seed = *s;
            }
        }
        Command::Impute { draws, seed, .. } => {
            if let Some(d) = draws {
                cfg.config.impute.draws = *d;
            }
            if let Some(s) = seed {
                cfg.config.impute.seed = *s;
            }
        }
        Command::Encode => {}
    }
    let ctx = Context { cfg, timing: cli.timing };
    match cli.command {
        Command::Encode => commands::encode(&ctx),
        Command::Train { resume, .. } => commands::train(&ctx, resume),
        Command::Report { checkpoint, dataset, sensitivity, fit, .. } => {
            commands::report(&ctx, &ReportOptions { checkpoint, dataset, sensitivity: sensitivity.map(|s| s.0), fit })
        }
        Command::Generate { checkpoint, fit, .. } => {
            commands::generate(&ctx, &commands::GenerateArgs { checkpoint: checkpoint.as_deref(), fit })
        }
        Command::Impute { checkpoint, input, targets, .. } => commands::impute(
            &ctx,
            &commands::ImputeArgs { checkpoint: checkpoint.as_deref(), input: input.as_deref(), targets },
        ),
        Command::Sensitivity { sizes, .. } => {
            let sizes = sizes.map(|s| s.0).unwrap_or_else(|| ctx.cfg.config.report.sensitivity_sizes.clone());
            commands::sensitivity(&ctx, &sizes)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string();
            eprintln!("error: {message}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                let cause = s.to_string();
                if !message.contains(&cause) {
                    eprintln!("  caused by: {cause}");
                }
                source = s.source();
            }
            ExitCode::from(e.exit_code())
        }
    }
}
