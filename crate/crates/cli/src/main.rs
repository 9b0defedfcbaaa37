mod config;
mod report;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use longtail_core::class_lab::parse_classes;

use config::{ExperimentConfig, Kind};
use run::Status;

/// Scale-resolved experiments on heavy-tailed laws and their convolutions.
#[derive(Parser, Debug)]
#[command(name = "longtail", version)]
struct Cli {
    /// Experiment to run.
    #[arg(value_enum)]
    command: Kind,
    /// TOML experiment config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for the JSON and CSV artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
    /// Class subset for `classify`, e.g. `L,OS`.
    #[arg(long)]
    classes: Option<String>,
}

const EXIT_ERROR: u8 = 1;
const EXIT_PRECONDITION: u8 = 2;
const EXIT_TOLERANCE: u8 = 3;

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<longtail_core::Error>() {
        Some(ce) if ce.is_precondition() => EXIT_PRECONDITION,
        _ => EXIT_ERROR,
    }
}

fn resolve(cli: &Cli) -> longtail_core::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p).map_err(|e| match e {
            longtail_core::Error::Io(io) => longtail_core::Error::Config(format!("{}: {io}", p.display())),
            other => other,
        })?,
        None => ExperimentConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if let Some(c) = &cli.classes {
        cfg.classify.classes = parse_classes(c)?;
    }
    // a config written for another experiment is rejected by validation
    cfg.kind.get_or_insert(cli.command);
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_ERROR);
        }
    }
    let cfg = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(if e.is_precondition() { EXIT_PRECONDITION } else { EXIT_ERROR });
        }
    };
    let res = run::run(cli.command, &cfg).and_then(|r| {
        let written = r.artifacts.commit(&cli.out)?;
        Ok((r.status, written))
    });
    match res {
        Ok((status, written)) => {
            for p in &written {
                eprintln!("wrote {}", p.display());
            }
            match status {
                Status::Ok => ExitCode::SUCCESS,
                Status::Failed(msg) => {
                    eprintln!("failed: {msg}");
                    ExitCode::from(EXIT_TOLERANCE)
                }
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
