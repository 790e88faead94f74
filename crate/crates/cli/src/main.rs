mod args;
mod config;
mod error;
mod jobs;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use tracing_subscriber::EnvFilter;

use crate::args::{Cli, Request};
use crate::error::CliError;
use crate::jobs::Job;
use crate::manifest::Manifest;

fn init_tracing(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();
}

fn execute(job: &Job, manifest_path: &Path) -> Result<Manifest, CliError> {
    let mut record_early = |outcome: &jobs::Outcome| Manifest::new(job, outcome)?.write(manifest_path);
    let outcome = job.run(&mut record_early)?;
    let manifest = Manifest::new(job, &outcome)?;
    manifest.write(manifest_path)?;
    Ok(manifest)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command.into_request()? {
        Request::Run(job) => {
            let job = match &cli.config {
                Some(path) => config::apply(*job, path)?,
                None => *job,
            };
            let path = cli.manifest.unwrap_or_else(|| job.default_manifest());
            execute(&job, &path)?;
            eprintln!("manifest: {}", path.display());
        }
        Request::Replay(args) => {
            let recorded = Manifest::load(&args.manifest)?;
            let path: PathBuf = cli.manifest.unwrap_or_else(|| args.manifest.clone());
            let fresh = execute(&recorded.job, &path)?;
            if args.verify {
                recorded.verify_outputs()?;
                eprintln!("replay verified: {} outputs match", fresh.outputs.len());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    init_tracing(cli.verbose);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
