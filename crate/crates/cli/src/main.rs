use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cotrain::commands::{self, corruption_summary};
use cotrain::config::{ExperimentConfig, Seeds};
use cotrain::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "cotrain", version, about = "Co-training with a noisy label filter on synthetic data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Replace the configured seeds with `A,B,data`.
    #[arg(long, value_name = "A,B,DATA")]
    seed_override: Option<Seeds>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the noisy training set and write it as CSV.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one configuration and write metrics and a summary.
    Train {
        #[command(flatten)]
        common: Common,
        /// Defaults to `output.out_dir` from the config.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
    /// Run the six-row ablation grid over the sweep seeds.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn load(common: &Common, sweep: bool) -> CliResult<ExperimentConfig> {
    let mut config = ExperimentConfig::load(&common.config)?;
    if let Some(seeds) = common.seed_override {
        if sweep {
            config.sweep_seeds = vec![seeds];
        } else {
            config.seeds = seeds;
        }
        config.validate()?;
    }
    Ok(config)
}

fn out_dir(flag: Option<PathBuf>, config: &ExperimentConfig) -> CliResult<PathBuf> {
    flag.or_else(|| config.output.out_dir.clone())
        .ok_or_else(|| CliError::Config("no output directory: pass --out-dir or set output.out_dir".into()))
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate { common, out } => {
            let config = load(&common, false)?;
            let data = commands::generate(&config, &out)?;
            println!("wrote {}: {}", out.display(), corruption_summary(&data));
        }
        Command::Train { common, out_dir: dir, quiet } => {
            let config = load(&common, false)?;
            let dir = out_dir(dir, &config)?;
            let result = commands::train(&config, &dir, |r| {
                if !quiet {
                    let t = r.threshold.map_or_else(|| "-".to_string(), |t| format!("{t:.2}"));
                    println!("epoch {:3}  lambda {:5.2}  threshold {t:>4}  test accuracy {:.4}", r.epoch, r.lambda, r.test_accuracy);
                }
            })?;
            let auc = result.final_selection_auc.map_or_else(|| "n/a".to_string(), |a| format!("{a:.4}"));
            println!("{}: final accuracy {:.4}, selection AUC {auc}", result.mode, result.final_accuracy);
        }
        Command::Ablate { common, out_dir: dir } => {
            let config = load(&common, true)?;
            let dir = out_dir(dir, &config)?;
            let table = commands::ablate(&config, &dir, |row, s, acc| {
                println!("{row:<14} seeds {},{},{}  accuracy {acc:.4}", s.network_a, s.network_b, s.data);
            })?;
            for r in &table.rows {
                println!("{:<14} {:.4} ± {:.4}", r.name, r.mean(), r.std());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
