use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use gesture_core::pipeline::{self, Method, PipelineConfig, Split};
use gesture_core::Result;

/// Skeleton-based gesture segmentation and classification.
#[derive(Parser)]
#[command(name = "gesture", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML configuration file (defaults to the desk-scale profile)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Method: a (single-scale windows), b (fused scales), c (recurrent)
    #[arg(long, global = true)]
    method: Option<Method>,

    /// Dataset split for predict / evaluate
    #[arg(long, global = true, default_value = "test")]
    split: Split,

    /// Global seed for dataset generation and split assignment
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Start from the paper-scale profile instead of the desk profile
    #[arg(long, global = true)]
    paper_scale: bool,

    /// Suppress progress messages
    #[arg(long, short, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic dataset and its split manifest
    Generate,
    /// Dump standardized descriptors for every split
    Extract,
    /// Train the networks of the selected method
    Train,
    /// Label the selected split with the trained method
    Predict,
    /// Score predictions of the selected split against ground truth
    Evaluate,
    /// Summarize every evaluated method and split
    Report,
    /// Print the effective configuration as TOML
    Config,
}

fn run(cli: &Cli) -> Result<()> {
    let mut cfg = PipelineConfig::load(cli.config.as_deref(), cli.paper_scale)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(m) = cli.method {
        cfg.method = m;
    }
    let method = cfg.method;
    let quiet = cli.quiet;
    let start = Instant::now();
    let log = |msg: &str| {
        if !quiet {
            eprintln!("[{:>7.1}s] {msg}", start.elapsed().as_secs_f64());
        }
    };
    match cli.command {
        Command::Generate => {
            let m = pipeline::cmd_generate(&cfg)?;
            for split in Split::ALL {
                println!("{split}: {} sequences", m.ids(split).len());
            }
        }
        Command::Extract => {
            let n = pipeline::cmd_extract(&cfg)?;
            println!("wrote {n} descriptor files");
        }
        Command::Train => {
            for p in pipeline::cmd_train(&cfg, method, log)? {
                println!("{}", p.display());
            }
        }
        Command::Predict => {
            let dir = pipeline::cmd_predict(&cfg, method, cli.split)?;
            println!("{}", dir.display());
        }
        Command::Evaluate => {
            let r = pipeline::cmd_evaluate(&cfg, method, cli.split)?;
            if let Some(a) = r.segmenter_accuracy {
                println!("segmenter frame accuracy  {a:.4}");
            }
            print!("{}", r.evaluation.to_table());
        }
        Command::Report => print!("{}", pipeline::cmd_report(&cfg)?),
        Command::Config => print!("{}", cfg.to_toml()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {msg}", e.category());
            ExitCode::from(2)
        }
    }
}
