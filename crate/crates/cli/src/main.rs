//! `chm`: runs the Q10 and light-response simulation sweeps and hybrid-model
//! fits on user CSV data.

use std::path::PathBuf;
use std::process::ExitCode;

use chm_core::experiments::{
    run_lue_simulation, run_on_csv, run_q10_simulation, ConfigError, ExperimentConfig, ExperimentError,
    ExperimentKind, RunOptions, PAPER_REPLICATIONS,
};
use chm_core::metrics::format_number;
use clap::{Args, Parser, Subcommand};

const EXIT_FATAL: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(name = "chm", version, about = "Causal hybrid modelling with double machine learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Q10 estimation sweep on synthetic respiration data.
    Q10Sim(Common),
    /// Flux-partitioning sweep over noise levels on synthetic NEE.
    LueSim(Common),
    /// Hybrid-model fit on a CSV file (experiment = q10-data or lue-data).
    Run(Common),
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Concurrent replications; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Reuse finished cells from a previous run in the same output directory.
    #[arg(long)]
    resume: bool,
    /// Use the full replication count instead of the desk-scale default.
    #[arg(long)]
    paper_scale: bool,
    /// Base seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn config_error(key: &str, message: String) -> ExperimentError {
    ConfigError::Invalid { key: key.to_string(), message }.into()
}

fn load_config(args: &Common, forced: Option<ExperimentKind>) -> Result<ExperimentConfig, ExperimentError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| config_error("config", format!("{}: {e}", args.config.display())))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    match forced {
        Some(kind) => {
            if cfg.experiment != ExperimentConfig::default().experiment && cfg.experiment != kind {
                return Err(config_error(
                    "experiment",
                    format!("{} does not match the {} subcommand", cfg.experiment.name(), kind.name()),
                ));
            }
            cfg.experiment = kind;
        }
        None => {
            if !matches!(cfg.experiment, ExperimentKind::Q10Data | ExperimentKind::LueData) {
                return Err(config_error(
                    "experiment",
                    format!("run expects q10-data or lue-data, got {}", cfg.experiment.name()),
                ));
            }
        }
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    if args.paper_scale {
        cfg.replications = PAPER_REPLICATIONS;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Number of failed cells.
fn execute(command: &Command) -> Result<usize, ExperimentError> {
    let (args, forced) = match command {
        Command::Q10Sim(a) => (a, Some(ExperimentKind::Q10Sim)),
        Command::LueSim(a) => (a, Some(ExperimentKind::LueSim)),
        Command::Run(a) => (a, None),
    };
    let cfg = load_config(args, forced)?;
    let opts = RunOptions { jobs: args.jobs, resume: args.resume };
    match command {
        Command::Q10Sim(_) => {
            let sweep = run_q10_simulation(&cfg, &opts)?;
            println!("method\tq10_true\tn\tcount\tmean\tsd");
            for (m, q, n, s) in &sweep.summary {
                println!("{}\t{}\t{n}\t{}\t{}\t{}", m.name(), format_number(*q), s.count, format_number(s.mean), format_number(s.sd));
            }
            Ok(sweep.failures)
        }
        Command::LueSim(_) => {
            let sweep = run_lue_simulation(&cfg, &opts)?;
            print!("{}", std::fs::read_to_string(cfg.output_dir.join("lue_table.txt")).unwrap_or_default());
            Ok(sweep.failures)
        }
        Command::Run(_) => {
            let outcome = run_on_csv(&cfg)?;
            print!("{}", outcome.summary.to_record());
            if let Some(q) = outcome.q10 {
                println!("q10={q}");
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(failed) => {
            eprintln!("chm: {failed} cells failed; see the status column of the run table");
            ExitCode::from(EXIT_PARTIAL)
        }
        Err(e) => {
            eprintln!("chm: {e}");
            ExitCode::from(if e.is_config() { EXIT_CONFIG } else { EXIT_FATAL })
        }
    }
}
