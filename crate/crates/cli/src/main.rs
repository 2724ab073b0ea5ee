//! `omsim` command-line front end.

mod args;
mod config;
mod error;
mod json;
mod output;
mod run;

use std::process::ExitCode;

use clap::Parser;
use rayon::prelude::*;

use args::{Cli, Command};
use config::{resolve, Job, Resolved};
use error::{CliError, CliResult};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let err = CliError::config(e.render().to_string().trim_end());
            eprintln!("{}", err.to_json(None));
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    let code = match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", e.to_json(None));
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}

/// Run the subcommand; job failures are reported individually and the exit
/// code follows the first failing job.
fn execute(command: Command) -> CliResult<i32> {
    let name = command.name();
    let (args, numeric) = match &command {
        Command::Presets { json } => {
            print!("{}", run::presets_listing(*json)?);
            return Ok(0);
        }
        Command::Steady(s) => (&s.run, s.numeric),
        Command::Validate(a) | Command::Sweep(a) | Command::Evolve(a) | Command::Spectrum(a) => (a, false),
    };
    let resolved = resolve(name, args)?;
    let work = |job: &Job| -> Outcome {
        let result = match &command {
            Command::Validate(_) => return run::validate_job(job),
            Command::Steady(_) => run::steady_job(&resolved, job, numeric),
            Command::Sweep(_) => run::sweep_job(&resolved, job),
            Command::Evolve(_) => run::evolve_job(&resolved, job),
            Command::Spectrum(_) => run::spectrum_job(&resolved, job),
            Command::Presets { .. } => unreachable!(),
        };
        match result {
            Ok(text) => (text, None),
            Err(e) => (String::new(), Some(e)),
        }
    };
    let results = schedule(&resolved, work)?;
    let mut code = 0;
    for (job, (text, err)) in resolved.jobs.iter().zip(results) {
        print!("{text}");
        if let Some(e) = err {
            eprintln!("{}", e.to_json(Some(&job.name)));
            if code == 0 {
                code = e.exit_code();
            }
        }
    }
    Ok(code)
}

/// Stdout text of a job and its error, if it failed.
type Outcome = (String, Option<CliError>);

/// Jobs run on a pool sized by `--jobs`; results come back in job order.
fn schedule<F>(resolved: &Resolved, work: F) -> CliResult<Vec<Outcome>>
where
    F: Fn(&Job) -> Outcome + Sync,
{
    let run_all = || resolved.jobs.par_iter().map(&work).collect::<Vec<_>>();
    match resolved.threads {
        None => Ok(run_all()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::config(format!("cannot start {n} worker threads: {e}")))?;
            Ok(pool.install(run_all))
        }
    }
}
