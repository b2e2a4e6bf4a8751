use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use lml_core::runner::{run, Command, ConfigFile, ExperimentSpec};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    CheckAssumptions,
    SimulatePath,
    Couple,
    Stopping,
    Mixing,
    A1Check,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::CheckAssumptions => Command::CheckAssumptions,
            Cmd::SimulatePath => Command::SimulatePath,
            Cmd::Couple => Command::Couple,
            Cmd::Stopping => Command::Stopping,
            Cmd::Mixing => Command::Mixing,
            Cmd::A1Check => Command::A1Check,
        }
    }
}

/// Coupling laboratory for Lévy-driven SDEs with random jump times.
#[derive(Debug, Parser)]
#[command(name = "lml", version)]
struct Args {
    /// Experiment to run.
    command: Cmd,
    /// JSON config file; the built-in default preset when omitted.
    #[arg(long, env = "LML_CONFIG")]
    config: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long, env = "LML_SEED")]
    seed: Option<u64>,
    /// Overrides `run.n_trials`.
    #[arg(long, env = "LML_TRIALS")]
    trials: Option<usize>,
    /// Output directory.
    #[arg(long, env = "LML_OUT", default_value = "out")]
    out: PathBuf,
    /// Worker threads; all cores when omitted.
    #[arg(long, env = "LML_THREADS")]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn execute(args: Args) -> Result<bool, String> {
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| format!("thread pool: {e}"))?;
    }
    let mut file = match &args.config {
        Some(p) => ConfigFile::load(p).map_err(|e| format!("{}: {e}", p.display()))?,
        None => ConfigFile::default(),
    };
    if let Some(s) = args.seed {
        file.run.seed = s;
    }
    if let Some(n) = args.trials {
        file.run.n_trials = n;
    }
    let spec = ExperimentSpec::new(args.command.into(), file, args.out);
    let outcome = run(&spec).map_err(|e| e.to_string())?;
    for g in &outcome.gates {
        println!("{}", g.verdict_line());
    }
    for f in &outcome.files {
        eprintln!("wrote {}", f.display());
    }
    Ok(outcome.all_pass())
}
