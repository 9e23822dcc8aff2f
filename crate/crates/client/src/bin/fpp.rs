use std::fs;
use std::io::{self, BufReader, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fpp_client::{Client, ClientError, LocalServer, SERVER_ENV};
use fpp_core::cli::config::ExperimentConfig;
use fpp_core::cli::records::{read_jsonl, write_jsonl};
use fpp_core::cli::runner::{workers_from_env, EXIT_USAGE, WORKERS_ENV};

#[derive(Parser)]
#[command(name = "fpp", about = "First-passage percolation experiments")]
struct Cli {
    /// Service to talk to; a private local one is started when absent.
    #[arg(long, global = true, env = SERVER_ENV)]
    server: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its JSON-lines records.
    Run {
        config: PathBuf,
        /// Run even when the weight law fails the moment assumptions.
        #[arg(long)]
        force: bool,
        /// Write records here instead of the config's output path.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Turn a record file into tab-separated plot data.
    Plot {
        records: PathBuf,
        #[arg(long)]
        kind: String,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Check a config and the weight law's assumptions without running.
    Validate {
        config: PathBuf,
        #[arg(long)]
        force: bool,
    },
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("fpp: {msg}");
    ExitCode::from(EXIT_USAGE as u8)
}

fn read(path: &PathBuf) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn write_out(path: Option<&PathBuf>, bytes: &[u8]) -> io::Result<()> {
    match path {
        Some(p) => fs::write(p, bytes),
        None => io::stdout().lock().write_all(bytes),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let _local;
    let base = match cli.server.as_deref().filter(|s| !s.is_empty()) {
        Some(url) => url.to_string(),
        None => match LocalServer::start() {
            Ok(s) => {
                let url = s.url();
                _local = s;
                url
            }
            Err(e) => return fail(e),
        },
    };
    let client = match Client::new(&base) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    match dispatch(&client, cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => fail(e),
    }
}

fn dispatch(client: &Client, command: Command) -> Result<i32, String> {
    let api = |e: ClientError| e.to_string();
    match command {
        Command::Run { config, force, output } => {
            let text = read(&config)?;
            let cfg = ExperimentConfig::parse(&text).map_err(|e| e.to_string())?;
            let env = std::env::var(WORKERS_ENV).ok();
            let workers = workers_from_env(cfg.workers, env.as_deref());
            let outcome = client.run(&text, force, Some(workers)).map_err(api)?;
            for d in &outcome.diagnostics {
                eprintln!("{d}");
            }
            let dest = output.or_else(|| cfg.output.as_ref().map(PathBuf::from));
            if !outcome.records.is_empty() || outcome.exit_code == 0 {
                let mut buf = Vec::new();
                write_jsonl(&mut buf, &outcome.records).map_err(|e| e.to_string())?;
                write_out(dest.as_ref(), &buf).map_err(|e| e.to_string())?;
            }
            Ok(outcome.exit_code)
        }
        Command::Plot { records, kind, output } => {
            let file = fs::File::open(&records).map_err(|e| format!("{}: {e}", records.display()))?;
            let recs = read_jsonl(BufReader::new(file))?;
            let tsv = client.plot(recs, &kind).map_err(api)?;
            write_out(output.as_ref(), tsv.as_bytes()).map_err(|e| e.to_string())?;
            Ok(0)
        }
        Command::Validate { config, force } => {
            let text = read(&config)?;
            let r = client.validate(&text, force).map_err(api)?;
            for d in &r.diagnostics {
                eprintln!("{d}");
            }
            if r.exit_code == 0 {
                println!("ok");
            }
            Ok(r.exit_code)
        }
    }
}
