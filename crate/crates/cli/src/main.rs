use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flagtune_cli::commands;
use flagtune_cli::{CliError, Project, Result};
use flagtune_core::tuners::Algorithm;

/// Black-box flag autotuner.
#[derive(Parser)]
#[command(name = "flagtune", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Project file.
    #[arg(long)]
    project: PathBuf,
    /// Overrides the project seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Characterize the target and write the dataset.
    Datagen(Common),
    /// Select influential flags from the dataset.
    Select(Common),
    /// Tune the selected flags.
    Tune {
        #[command(flatten)]
        common: Common,
        /// bo, bo-warm, rbo or sa; defaults to the project setting.
        #[arg(long, value_parser = parse_algorithm)]
        algorithm: Option<Algorithm>,
        /// Tune every active flag instead of the selected ones.
        #[arg(long)]
        all_flags: bool,
    },
    /// Compare the tuning reports in the output directory.
    Report(Common),
}

fn parse_algorithm(s: &str) -> std::result::Result<Algorithm, String> {
    s.parse().map_err(|e: flagtune_core::Error| e.to_string())
}

fn load(c: &Common) -> Result<Project> {
    let mut p = Project::load(&c.project)?;
    if let Some(seed) = c.seed {
        p.config.seed = seed;
    }
    if let Some(out) = &c.out {
        p.out_dir = out.clone();
    }
    Ok(p)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Datagen(c) => {
            let p = load(&c)?;
            let out = commands::datagen(&p)?;
            println!(
                "{} rows from {} trials, {} rounds ({:?}), test RMSE {:.4e}",
                out.rows,
                out.trials,
                out.report.rounds.len(),
                out.report.stop_reason,
                out.report.final_rmse()
            );
            println!("wrote {}", out.dataset.display());
        }
        Command::Select(c) => {
            let p = load(&c)?;
            let r = commands::select(&p)?;
            println!("lambda {}: kept {} of {} flags", r.lambda, r.selected.len(), r.weights.len());
            for name in &r.selected {
                println!("  {name}");
            }
        }
        Command::Tune { common, algorithm, all_flags } => {
            let p = load(&common)?;
            let alg = algorithm.unwrap_or(p.config.tune.algorithm);
            let r = commands::tune(&p, alg, all_flags)?;
            let full = p.space.clone();
            print!("{}", commands::summary(&r, &full));
        }
        Command::Report(c) => {
            let p = load(&c)?;
            let rows = commands::report(&p)?;
            print!("{}", commands::comparison_text(&rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or_default();
            let msg = first.strip_prefix("error: ").unwrap_or(first);
            eprintln!("{}", CliError::Usage(msg.to_string()).render());
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.render());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
