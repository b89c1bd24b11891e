use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use convoy_cli::{run, run_batch, Command, ExitStatus, Options, Outcome};

#[derive(Parser)]
#[command(name = "convoy", version, about = "Differential-game convoy simulator")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args, Clone)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long, required_unless_present = "batch", conflicts_with = "batch")]
    config: Option<PathBuf>,
    /// Output directory, overriding the config's `output.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write SVG charts.
    #[arg(long)]
    plot: bool,
    /// Also check the game-level solvability matrix.
    #[arg(long)]
    game: bool,
    /// Run every config matching a glob pattern, one thread each.
    #[arg(long)]
    batch: Option<String>,
    #[arg(long, hide = true)]
    negate_gains: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the receding-horizon convoy simulation and write logs.
    Simulate(Common),
    /// Report the closed-form solvability check.
    Solvability(Common),
    /// Report closed-loop stability of the receding-horizon feedback.
    Stability(Common),
}

fn print(path: &std::path::Path, outcome: &Outcome) {
    match outcome {
        Outcome::Report(r) => {
            let _ = writeln!(std::io::stdout(), "{r}");
        }
        Outcome::ConfigError(e) => eprintln!("config error in {}: {e}", path.display()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CONVOY_LOG", "warn")).init();
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Solvability(a) => (Command::Solvability, a),
        Cmd::Stability(a) => (Command::Stability, a),
    };
    let opts = Options {
        out: args.out,
        plot: args.plot,
        game: args.game,
        negate_gains: args.negate_gains,
    };
    let status = if let Some(pattern) = &args.batch {
        match run_batch(command, pattern, &opts) {
            Ok(results) => {
                for (p, o) in &results {
                    print(p, o);
                }
                results
                    .iter()
                    .map(|(_, o)| o.status())
                    .max()
                    .unwrap_or(ExitStatus::Ok)
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitStatus::Config
            }
        }
    } else {
        let path = args.config.expect("clap enforces --config without --batch");
        let outcome = run(command, &path, &opts);
        print(&path, &outcome);
        outcome.status()
    };
    ExitCode::from(status.code() as u8)
}
