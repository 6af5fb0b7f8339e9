use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dcc::data::{gmm_data, pcfg_data};
use dcc::error::{DccError, Result};
use dcc::experiment::{read_reports, run_experiment, summarize, Engine, ModelName, ModelSpec};

#[derive(Parser)]
#[command(name = "dcc", about = "Divide-conquer-combine inference experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a model's synthetic dataset as CSV.
    GenData {
        #[arg(long)]
        model: ModelName,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run an engine over one or more seeds.
    Run {
        #[arg(long)]
        model: ModelName,
        #[arg(long, default_value = "dcc")]
        engine: Engine,
        /// Execution budget; defaults to the model's tuned setting.
        #[arg(long)]
        budget: Option<u64>,
        /// First seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of consecutive seeds.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        /// `key = value` file applied over the model's tuned settings.
        #[arg(long)]
        config: Option<PathBuf>,
        /// CSV dataset; generated from `--data-seed` when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        data_seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        log_utilities: bool,
    },
    /// Aggregate the run files in a directory.
    Summarize {
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { model, seed, out } => {
            let data = match model {
                ModelName::TwoBranch => return Err(DccError::Config("two-branch has a fixed observation and no dataset".into())),
                ModelName::PcfgFn => pcfg_data(seed),
                ModelName::GmmOpen | ModelName::GmmMisspec => gmm_data(seed),
            };
            std::fs::create_dir_all(&out)?;
            let file = out.join(format!("{model}_data{seed}.csv"));
            data.write(&file)?;
            println!("{}", file.display());
        }
        Command::Run { model, engine, budget, seed, seeds, config, data, data_seed, out, log_utilities } => {
            let mut cfg = model.default_config();
            if let Some(path) = config {
                cfg.apply_text(&std::fs::read_to_string(path)?)?;
            }
            if let Some(b) = budget {
                cfg.budget = b;
            }
            cfg.log_utilities |= log_utilities;
            cfg.validate()?;
            let spec = ModelSpec { name: model, data_seed, data_file: data };
            let seed_list: Vec<u64> = (seed..seed + seeds).collect();
            let (_, summary) = run_experiment(&spec, engine, &cfg, &seed_list, out.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Summarize { out } => {
            let reports = read_reports(&out)?;
            if reports.is_empty() {
                return Err(DccError::Config(format!("no run files in {}", out.display())));
            }
            let summary = summarize(&reports);
            let text = serde_json::to_string_pretty(&summary)? + "\n";
            std::fs::write(out.join("summary.json"), &text)?;
            print!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
