use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mapc_runner::{parse_config, read_log, replay_verify, run_match, summarize, write_outputs};

#[derive(Parser)]
#[command(name = "mapc", about = "Run, replay and summarize block-assembly matches")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Play a match and write events.jsonl and summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        steps: Option<u32>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        verbosity: Option<u8>,
    },
    /// Re-simulate a log and check every state hash.
    Replay {
        #[arg(long)]
        log: PathBuf,
    },
    /// Print the summary derived from a log.
    Summarize {
        #[arg(long)]
        log: PathBuf,
    },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run {
            config,
            seed,
            steps,
            out,
            verbosity,
        } => {
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("{}: {e}", config.display());
                    return ExitCode::from(2);
                }
            };
            let mut cfg = match parse_config(&text) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("{}: {e}", config.display());
                    return ExitCode::from(2);
                }
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(s) = steps {
                if s == 0 {
                    eprintln!("--steps must be positive");
                    return ExitCode::from(2);
                }
                cfg.steps = s;
            }
            if let Some(v) = verbosity {
                cfg.verbosity = v;
            }
            let output = run_match(&cfg);
            if let Err(e) = write_outputs(&out, &output) {
                eprintln!("{}: {e}", out.display());
                return ExitCode::from(1);
            }
            for (name, t) in &output.summary.teams {
                println!(
                    "{name} ({}): score {}, tasks {}/{}",
                    t.engine, t.score, t.tasks_completed, t.tasks_attempted
                );
            }
            ExitCode::SUCCESS
        }
        Command::Replay { log } => {
            let records = match read_log(&log) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("{}: {e}", log.display());
                    return ExitCode::from(1);
                }
            };
            match replay_verify(&records) {
                Ok(()) => {
                    println!("ok");
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    println!("{e}");
                    ExitCode::from(3)
                }
            }
        }
        Command::Summarize { log } => {
            let records = match read_log(&log) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("{}: {e}", log.display());
                    return ExitCode::from(1);
                }
            };
            let summary = summarize(&records).expect("read_log checks the header");
            println!("{}", serde_json::to_string_pretty(&summary).unwrap());
            ExitCode::SUCCESS
        }
    }
}
