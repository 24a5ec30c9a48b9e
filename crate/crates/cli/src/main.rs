mod args;
mod output;

use std::process::ExitCode;

use assure_dx_core::config::RunConfig;
use assure_dx_core::error::Error;
use assure_dx_core::par::Monitor;
use assure_dx_core::run;
use clap::Parser;

use crate::args::{CaseStudy, Cli, Command, Common};
use crate::output::{emit, Report};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Engine(#[from] Error),
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Engine(Error::NotFound { .. }) => 2,
            CliError::Engine(Error::Infeasible(_)) => 3,
            _ => 1,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn load(common: &Common, base: Option<RunConfig>) -> Result<RunConfig, CliError> {
    let mut doc = match (&common.config, base) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
                path: path.display().to_string(),
                source,
            })?;
            serde_json::from_str(&text).map_err(|e| Error::config("", e.to_string()))?
        }
        (None, Some(cfg)) => cfg.to_value(),
        (None, None) => serde_json::Value::Object(Default::default()),
    };
    common.overlay(&mut doc);
    Ok(RunConfig::from_value(doc)?)
}

fn execute(command: Command) -> Result<(), CliError> {
    let report = match command {
        Command::SampleSize(c) => {
            let cfg = load(&c, None)?;
            let exec = c.execution();
            Report::SampleSize(run::run_sample_size(&cfg, exec)?, cfg)
        }
        Command::Curve(c) => {
            let cfg = load(&c, None)?;
            let exec = c.execution();
            Report::Curve(run::run_curve(&cfg, exec)?, cfg)
        }
        Command::Sensitivity(c) => {
            let cfg = load(&c, None)?;
            let exec = c.execution();
            Report::Sensitivity(run::run_sensitivity(&cfg, exec)?, cfg)
        }
        Command::Conflict(c) => {
            let cfg = load(&c, None)?;
            Report::Conflict(run::run_conflict(&cfg)?, cfg)
        }
        Command::Compare(c) => {
            let cfg = load(&c, None)?;
            let exec = c.execution();
            Report::Compare(run::run_compare(&cfg, exec, Monitor::default())?, cfg)
        }
        Command::CaseStudy(CaseStudy::Vap(c)) => {
            let cfg = load(&c, Some(run::vap_config()))?;
            let exec = c.execution();
            Report::Vap(Box::new(run::run_vap_case_study(&cfg, exec)?), cfg)
        }
    };
    emit(&report)
}
