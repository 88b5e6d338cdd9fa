use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use waferbench::commands::{self, Outcome};
use waferbench::config::{self, Architecture, Overrides};
use waferbench::{BenchError, Result};
use waferbench_core::dataset::synthetic::SyntheticConfig;

#[derive(Parser)]
#[command(name = "waferbench", version, about = "Wafer trace classifiers: training, analog crossbar comparison and cost tables")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment config; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; an existing one is versioned as DIR.1, DIR.2, ...
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    arch: Option<Architecture>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Largest absolute training input after rescaling.
    #[arg(long)]
    scale_max: Option<f64>,
    /// Keep only the first N samples of every trace.
    #[arg(long)]
    series_length: Option<usize>,
    /// Training split file.
    #[arg(long)]
    train: Option<PathBuf>,
    /// Test split file.
    #[arg(long)]
    test: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<config::LoadedConfig> {
        let o = Overrides {
            architecture: self.arch,
            seed: self.seed,
            output_dir: self.out.clone(),
            epochs: self.epochs,
            learning_rate: self.lr,
            scale_max: self.scale_max,
            series_length: self.series_length,
            train: self.train.clone(),
            test: self.test.clone(),
        };
        config::load(self.config.as_deref(), &o)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one architecture and evaluate it on the test split.
    Train(Common),
    /// Evaluate a checkpoint.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Compare crossbar and software outputs over the whole test split.
    Analog {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Primitive counts and area/power for the configured architecture.
    Cost(Common),
    /// Accuracy and cost for all six architectures.
    Table1 {
        #[command(flatten)]
        common: Common,
        /// Run directories with metrics.json to collect instead of training.
        #[arg(long, num_args = 1..)]
        runs: Vec<PathBuf>,
    },
    /// Analog/software sign agreement for selected test wafers.
    Table2 {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comma-separated 1-based test positions; empty for none.
        #[arg(long)]
        indices: Option<String>,
    },
    /// Per-step LSTM unit outputs, analog and software, for one test wafer.
    Fig2 {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// 1-based test position.
        #[arg(long)]
        index: Option<usize>,
    },
    /// Write a synthetic stand-in dataset for smoke tests.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        train_size: usize,
        #[arg(long, default_value_t = 6164)]
        test_size: usize,
        #[arg(long, default_value_t = 152)]
        series_length: usize,
    },
}

fn parse_indices(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| BenchError::Config(format!("bad wafer index {t:?}"))))
        .collect()
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Train(c) => commands::train_cmd(&c.load()?),
        Command::Eval { common, checkpoint } => commands::eval_cmd(&common.load()?, &checkpoint),
        Command::Analog { common, checkpoint } => commands::analog_cmd(&common.load()?, &checkpoint),
        Command::Cost(c) => commands::cost_cmd(&c.load()?),
        Command::Table1 { common, runs } => commands::table1_cmd(&common.load()?, &runs),
        Command::Table2 {
            common,
            checkpoint,
            indices,
        } => {
            let indices = indices.as_deref().map(parse_indices).transpose()?;
            commands::table2_cmd(&common.load()?, &checkpoint, indices)
        }
        Command::Fig2 {
            common,
            checkpoint,
            index,
        } => commands::fig2_cmd(&common.load()?, &checkpoint, index),
        Command::Synth {
            out,
            seed,
            train_size,
            test_size,
            series_length,
        } => commands::synth_cmd(
            &out,
            &SyntheticConfig {
                train_size,
                test_size,
                series_length,
                seed,
                ..Default::default()
            },
        ),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(outcome) => {
            for l in &outcome.lines {
                println!("{l}");
            }
            println!("wrote {}", outcome.dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
