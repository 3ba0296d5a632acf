use std::path::PathBuf;
use std::process::ExitCode;

use aacgka::abc::AbcScheme;
use aacgka_cli::{parse_scenario, run_scenario_with};
use aacgka_harness::{run_game, GameKind};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aacgka", about = "Run protocol scenarios and security games")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario script and print its transcript.
    Scenario {
        file: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the transcript here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "bbs-style")]
        abc: AbcScheme,
    },
    /// Run a security game and report the measured advantage.
    Game {
        /// ri, unf, unlink, abc-unf, abc-unlink, euf-cma or kind
        name: String,
        #[arg(long)]
        adversary: Option<String>,
        #[arg(long, default_value_t = 500)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "bbs-style")]
        abc: AbcScheme,
        /// Print the per-trial log before the summary.
        #[arg(long)]
        verbose: bool,
    },
}

fn usage(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match cli.cmd {
        Cmd::Scenario { file, seed, out, abc } => {
            let text = match std::fs::read_to_string(&file) {
                Ok(t) => t,
                Err(e) => return usage(format!("{}: {e}", file.display())),
            };
            let script = match parse_scenario(&text) {
                Ok(s) => s,
                Err(e) => return usage(format!("{}: {e}", file.display())),
            };
            let outcome = run_scenario_with(&script, seed, abc);
            match out {
                Some(path) => {
                    if let Err(e) = std::fs::write(&path, outcome.text()) {
                        return usage(format!("{}: {e}", path.display()));
                    }
                }
                None => print!("{}", outcome.text()),
            }
            if outcome.success() {
                ExitCode::SUCCESS
            } else {
                eprintln!("{} assertion(s) failed", outcome.failed_asserts);
                ExitCode::from(1)
            }
        }
        Cmd::Game { name, adversary, trials, seed, abc, verbose } => {
            let game: GameKind = match name.parse() {
                Ok(g) => g,
                Err(e) => return usage(e),
            };
            let adversary = adversary.unwrap_or_else(|| game.default_adversary().to_owned());
            let result = match run_game(game, &adversary, trials, seed, abc) {
                Ok(r) => r,
                Err(e) => return usage(e),
            };
            if verbose {
                print!("{}", result.transcript_text());
            } else {
                println!("{}", result.summary());
            }
            if result.meets_expectation() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
    }
}
