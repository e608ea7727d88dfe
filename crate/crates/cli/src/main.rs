use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use uwpla::experiment::{self, ExperimentConfig, FigureId, Mode, RocConfig};
use uwpla::{AnalyticModel, Error};

#[derive(Debug, Parser)]
#[command(
    name = "uwpla",
    version,
    about = "Position-based authentication for underwater acoustic networks"
)]
struct Cli {
    /// TOML experiment configuration. Missing keys take the evaluation defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true, allow_hyphen_values = true)]
    seed: Option<u64>,
    /// Monte Carlo trials per hypothesis.
    #[arg(long, global = true, allow_hyphen_values = true)]
    trials: Option<u64>,
    /// Output file, or directory for `figure` (and when no `.csv` extension is given).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Analytic model of the test statistic.
    #[arg(long, global = true, value_enum)]
    model: Option<Model>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Model {
    Projected,
    PerAnchor,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Analytic FAR/MDR for the configured point or sweep.
    Analytic,
    /// Monte Carlo FAR/MDR for the configured point or sweep.
    Simulate,
    /// Analytic and/or Monte Carlo rates, as set by the config's `mode`.
    Sweep,
    /// ROC curve of the configured scenario.
    Roc {
        /// Number of automatically placed thresholds.
        #[arg(long)]
        points: Option<usize>,
    },
    /// Regenerate the data behind one of the evaluation figures.
    Figure {
        #[arg(value_parser = parse_figure)]
        id: FigureId,
    },
    /// Run whatever the config describes: its figure recipe, ROC section or sweep.
    Run,
    /// Print the effective configuration as TOML.
    Config,
}

fn parse_figure(s: &str) -> Result<FigureId, String> {
    s.parse::<FigureId>().map_err(|e| e.to_string())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Domain(_) => 2,
        Error::NumericalFailure { .. } => 3,
        Error::Io(_) => 4,
    }
}

fn load_config(cli: &Cli) -> uwpla::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => experiment::default_paper_config(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.trials {
        cfg.trials = t;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(m) = cli.model {
        cfg.analytic_model = match m {
            Model::Projected => AnalyticModel::Projected,
            Model::PerAnchor => AnalyticModel::PerAnchor,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn csv_path(out: &Path, name: &str) -> PathBuf {
    if out
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
    {
        out.to_path_buf()
    } else {
        out.join(format!("{name}.csv"))
    }
}

fn run(cli: &Cli) -> uwpla::Result<()> {
    let mut cfg = load_config(cli)?;
    let Format::Csv = cli.format;
    let (mode, name) = match &cli.command {
        Command::Config => {
            print!("{}", cfg.to_toml_string()?);
            return Ok(());
        }
        Command::Run if cfg.figure.is_some() => {
            let out = experiment::run_experiment(&cfg)?;
            report(&out);
            return Ok(());
        }
        Command::Run => (cfg.mode, "run"),
        Command::Figure { id } => {
            let out = experiment::run_figure(*id, &cfg, &cfg.out.clone())?;
            report(&out);
            return Ok(());
        }
        Command::Roc { points } => {
            let mut roc = cfg.roc.clone().unwrap_or(RocConfig {
                grid: None,
                points: None,
            });
            if points.is_some() {
                roc.points = *points;
            }
            cfg.roc = Some(roc);
            cfg.validate()?;
            (cfg.mode, "roc")
        }
        Command::Analytic => (Mode::Analytic, "analytic"),
        Command::Simulate => (Mode::Montecarlo, "simulate"),
        Command::Sweep => (cfg.mode, "sweep"),
    };
    cfg.figure = None;
    cfg.mode = mode;
    cfg.out = csv_path(&cfg.out, name);
    if matches!(
        cli.command,
        Command::Analytic | Command::Simulate | Command::Sweep
    ) {
        cfg.roc = None;
    }
    let out = experiment::run_experiment(&cfg)?;
    report(&out);
    Ok(())
}

fn report(out: &experiment::ExperimentOutput) {
    for line in &out.summary {
        println!("{line}");
    }
    for f in &out.files {
        println!("wrote {}", f.display());
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
