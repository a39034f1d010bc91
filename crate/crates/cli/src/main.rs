//! `optdes` command-line tool.

mod config;
mod exit;
mod reproduce;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::exit::CliError;

const SCHEMA: &str = include_str!("../schema.json");

#[derive(Debug, Parser)]
#[command(name = "optdes", about = "D-optimal designs for GLMs and random-intercept block models")]
struct Cli {
    /// Worker threads (default: OPTDES_THREADS, else all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the task described by a JSON config file.
    Run {
        config: PathBuf,
        /// Override a config value, e.g. `--set prior.theta=[0,2]` or `--set seed=3`.
        #[arg(long = "set", value_name = "PATH=JSON")]
        overrides: Vec<String>,
        /// Output directory (overrides `output.dir`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute a stored reference table and compare cell by cell.
    Reproduce {
        /// Table id; `--list` shows them all.
        #[arg(required_unless_present = "list")]
        table: Option<String>,
        #[arg(long)]
        list: bool,
        #[arg(long, default_value = "optdes-out")]
        out: PathBuf,
    },
    /// Print the JSON schema of run configs.
    Schema,
    /// Print the version.
    Version,
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("OPTDES_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::validation(format!("OPTDES_THREADS={v:?} is not a thread count"))),
        Err(_) => Ok(None),
    }
}

fn write_files(dir: &Path, files: &[(String, String)]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(e, &format!("cannot create {}", dir.display())))?;
    for (name, text) in files {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| CliError::io(e, &format!("cannot write {}", path.display())))?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    if let Some(n) = thread_count(cli.threads)? {
        if n == 0 {
            return Err(CliError::validation("thread count must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::validation(format!("cannot start thread pool: {e}")))?;
    }
    match cli.command {
        Command::Run { config, overrides, out } => {
            let cfg = config::load_config(&config, &overrides)?;
            let outcome = run::execute(&cfg)?;
            let dir = out.unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
            write_files(&dir, &outcome.files)?;
            println!("{}", outcome.summary);
            for (name, _) in &outcome.files {
                println!("wrote {}", dir.join(name).display());
            }
            Ok(outcome.code)
        }
        Command::Reproduce { table, list, out } => {
            if list {
                for (id, title, _) in reproduce::REGISTRY {
                    println!("{id:32} {title}");
                }
                return Ok(0);
            }
            let table = reproduce::reproduce(table.as_deref().unwrap_or_default())?;
            write_files(
                &out,
                &[
                    (format!("{}.csv", table.id), reproduce::table_csv(&table)),
                    (format!("{}.json", table.id), reproduce::table_json(&table)),
                ],
            )?;
            print!("{}", reproduce::table_text(&table));
            Ok(if table.pass { 0 } else { exit::MISMATCH })
        }
        Command::Schema => {
            print!("{SCHEMA}");
            Ok(0)
        }
        Command::Version => {
            println!("optdes {}", env!("CARGO_PKG_VERSION"));
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code as u8)
        }
    }
}
